"""Bank fixtures for tests of the apps built on top of basis"""
