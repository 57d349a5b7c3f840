"""segsum: divide-and-conquer long-document summarization with external memories."""

__version__ = "0.1.0"
