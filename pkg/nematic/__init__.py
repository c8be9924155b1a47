import logging
import os

from config import config

# 包级日志器，子模块均挂在其下
logger = logging.getLogger('nematic')


def create_app(config_name=None):
    """按环境选择配置类并初始化日志"""
    if config_name is None:
        config_name = os.environ.get('NEMATIC_ENV') or 'development'

    # 获取配置类
    config_class = config.get(config_name, config['default'])
    config_class.init_app(logger)
    return config_class
