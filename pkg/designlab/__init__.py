from designlab.config import Config


__version__ = Config.VERSION
