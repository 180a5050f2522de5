from flask import Flask
from flask.cli import FlaskGroup

from ghist.commands import register_commands
from ghist.config import DEFAULTS

APP_TITLE = "ghist: gapped histograms and analysis of histogram"


def create_app(config=None):
    """Flask app carrying the run defaults and the ghist commands."""
    app = Flask(__name__)
    app.config.from_mapping(DEFAULTS)
    if config:
        app.config.update(config)
    register_commands(app)
    return app


cli = FlaskGroup(
    create_app=create_app,
    add_default_commands=False,
    load_dotenv=False,
    help=APP_TITLE,
)


if __name__ == "__main__":
    cli()
