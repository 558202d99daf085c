import logging
import logging.config
import os
from typing import Any, Dict, Optional

PROJECT_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
LOG_DIR = os.path.join(PROJECT_ROOT, "logs")
REPORT_DIR = os.path.join(PROJECT_ROOT, "reports")

CONSOLE_FORMAT = "%(asctime)s [%(levelname)s] %(name)s: %(message)s"
FILE_FORMAT = "%(asctime)s [%(levelname)s] %(name)s %(filename)s:%(lineno)d %(funcName)s: %(message)s"
DATE_FORMAT = "%Y-%m-%d %H:%M:%S"

# 第三方库只保留 WARNING 以上
QUIET_LOGGERS = ("matplotlib", "numexpr", "pytest", "asyncio")


def build_logging_config(console_level: str = "INFO") -> Dict[str, Any]:
    """
    生成 dictConfig 配置：
      console  -> stderr（CLI 的 stdout 只输出结果数据）
      run_log  -> logs/fhn_run.log，按天轮转保留 7 天
      fail_log -> logs/fhn_failures.log，只记录 ERROR（数值失败、文件读写失败）
    """
    return {
        "version": 1,
        "disable_existing_loggers": False,  # 模块级 logger 在配置前已创建
        "formatters": {
            "brief": {"format": CONSOLE_FORMAT, "datefmt": DATE_FORMAT},
            "detailed": {"format": FILE_FORMAT, "datefmt": DATE_FORMAT},
        },
        "handlers": {
            "console": {
                "class": "logging.StreamHandler",
                "level": console_level.upper(),
                "formatter": "brief",
            },
            "run_log": {
                "class": "logging.handlers.TimedRotatingFileHandler",
                "level": "DEBUG",
                "formatter": "detailed",
                "filename": os.path.join(LOG_DIR, "fhn_run.log"),
                "when": "D",
                "backupCount": 7,
                "encoding": "utf-8",
            },
            "fail_log": {
                "class": "logging.handlers.RotatingFileHandler",
                "level": "ERROR",
                "formatter": "detailed",
                "filename": os.path.join(LOG_DIR, "fhn_failures.log"),
                "maxBytes": 20 * 1024 * 1024,
                "backupCount": 3,
                "encoding": "utf-8",
            },
        },
        "root": {"handlers": ["console", "run_log", "fail_log"], "level": "DEBUG"},
        "loggers": {name: {"level": "WARNING"} for name in QUIET_LOGGERS},
    }


def setup_global_logging(console_level: Optional[str] = None):
    """
    加载全局日志配置，入口（run_cli.py / run_test.py）最先调用
    :param console_level: 控制台级别；None 时为 INFO
    """
    os.makedirs(LOG_DIR, exist_ok=True)
    os.makedirs(REPORT_DIR, exist_ok=True)
    try:
        logging.config.dictConfig(build_logging_config(console_level or "INFO"))
    except (ValueError, TypeError, OSError) as e:
        print(f"❌ 全局日志配置加载失败：{e}")
        raise
    logger = logging.getLogger(__name__)
    logger.debug(f"✅ 日志配置加载完成，日志目录：{LOG_DIR}，报告目录：{REPORT_DIR}")


def get_logger(name):
    """各模块统一通过此方法取 logger（传入 __name__）"""
    return logging.getLogger(name)
