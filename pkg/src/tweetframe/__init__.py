"""Problem / Solution / Other framing classification for legislators' posts."""

from tweetframe.labels import Category

__version__ = "0.1.0"
__all__ = ["Category", "__version__"]
