"""
评估 - 误差指标与固定参数场景
"""
