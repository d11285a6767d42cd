"""Test helpers shared by the numerical apps"""
