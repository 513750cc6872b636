"""API module for the FastAPI inference server"""
