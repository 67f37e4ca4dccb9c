"""Mine, curate and describe corpora of Rasa chatbots hosted on GitHub."""

__version__ = "0.1.0"
