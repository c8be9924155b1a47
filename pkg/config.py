import os
import logging
from logging.handlers import RotatingFileHandler


class Config:
    """基础配置类"""
    # 应用基础配置
    APP_NAME = "nematic"
    BASE_DIR = os.path.abspath(os.path.dirname(__file__))

    # 输出目录
    OUTPUT_DIR = os.environ.get('NEMATIC_OUTPUT_DIR') or os.path.join(BASE_DIR, 'output')

    # 线性求解器配置
    KRYLOV_TOL = 1e-10  # CG相对残差
    KRYLOV_MAXITER_FACTOR = 10  # max_iter = factor * sqrt(未知数个数)
    DENSE_ORACLE_MAX_UNKNOWNS = 20000

    # 不变量检查
    CHECK_INVARIANTS = True
    ENERGY_TOL = 1e-12
    MBP_TOL = 1e-12
    G_EXPONENT_LIMIT = 700.0  # exp参数超过该值视为数值爆破

    # 日志配置
    LOG_LEVEL = logging.INFO
    LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    LOG_FILE = None

    # 其他基础配置
    DEBUG = False
    TESTING = False
    ENV = 'production'

    @classmethod
    def init_app(cls, logger):
        """初始化日志"""
        logger.setLevel(cls.LOG_LEVEL)
        if not logger.handlers:
            stream_handler = logging.StreamHandler()
            stream_handler.setLevel(cls.LOG_LEVEL)
            stream_handler.setFormatter(logging.Formatter(cls.LOG_FORMAT))
            logger.addHandler(stream_handler)

    @classmethod
    def _add_file_handler(cls, logger, max_bytes, backup_count):
        if any(isinstance(h, RotatingFileHandler) for h in logger.handlers):
            return

        # 确保日志目录存在
        os.makedirs(os.path.dirname(cls.LOG_FILE), exist_ok=True)

        file_handler = RotatingFileHandler(
            cls.LOG_FILE,
            maxBytes=max_bytes,
            backupCount=backup_count
        )
        file_handler.setLevel(cls.LOG_LEVEL)
        file_handler.setFormatter(logging.Formatter(cls.LOG_FORMAT))
        logger.addHandler(file_handler)


class DevelopmentConfig(Config):
    """开发环境配置"""
    DEBUG = True
    ENV = 'development'

    # 开发环境日志配置
    LOG_LEVEL = logging.DEBUG
    LOG_FILE = os.path.join(Config.BASE_DIR, 'logs', 'nematic_dev.log')

    @classmethod
    def init_app(cls, logger):
        """初始化开发环境配置"""
        super().init_app(logger)
        cls._add_file_handler(logger, 5 * 1024 * 1024, 5)  # 5MB
        logger.debug(f"{Config.APP_NAME} started in development mode")


class TestingConfig(Config):
    """测试环境配置"""
    TESTING = True
    DEBUG = True
    ENV = 'testing'

    # 测试环境不写日志文件
    LOG_LEVEL = logging.WARNING


class ProductionConfig(Config):
    """生产环境配置"""
    ENV = 'production'
    DEBUG = False

    # 生产环境日志配置
    LOG_LEVEL = logging.ERROR
    LOG_FILE = os.path.join(Config.BASE_DIR, 'logs', 'nematic.log')

    @classmethod
    def init_app(cls, logger):
        """初始化生产环境配置"""
        super().init_app(logger)
        cls._add_file_handler(logger, 10 * 1024 * 1024, 10)  # 10MB

        # 确保必须的环境变量已设置
        required_env_vars = ['NEMATIC_OUTPUT_DIR']
        missing_vars = [var for var in required_env_vars if not os.environ.get(var)]
        if missing_vars:
            logger.error(f"Missing required environment variables: {', '.join(missing_vars)}")
            raise RuntimeError(f"Missing required environment variables: {', '.join(missing_vars)}")


# 配置映射，便于根据环境变量选择配置
config = {
    'development': DevelopmentConfig,
    'testing': TestingConfig,
    'production': ProductionConfig,
    'default': DevelopmentConfig
}

# 获取当前环境配置
env_name = os.environ.get('NEMATIC_ENV') or 'development'
current_config = config.get(env_name, DevelopmentConfig)
