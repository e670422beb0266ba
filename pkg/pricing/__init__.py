"""
定价引擎 - 特征函数、蒙特卡洛、有限差分三条定价路径及其共用的模型类型
"""
