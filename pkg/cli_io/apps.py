from django.apps import AppConfig


class CliIoConfig(AppConfig):
    name = "cli_io"
    verbose_name = "Command line and file IO"
