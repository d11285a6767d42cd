from django.apps import AppConfig


class AutodiffConfig(AppConfig):
    name = "autodiff"
    verbose_name = "Automatic differentiation"
