"""
物理约束残差网络 - 网络、精确求导、采样、代价函数、L-BFGS 与训练流程
"""
