"""Storage module for datasets, trained models and pydantic schemas"""
