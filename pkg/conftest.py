"""Initialise Django so pytest can collect the apps' SimpleTestCase suites."""

import os

import django

os.environ.setdefault("DJANGO_SETTINGS_MODULE", "afex_explainer.settings")
django.setup()
