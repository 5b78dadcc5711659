import logging

from app import app
from utils.config import get_settings

logging.basicConfig(level=get_settings().log_level)

if __name__ == "__main__":
    app.run()
