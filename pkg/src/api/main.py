"""
Entry point for running FastAPI server
"""
import uvicorn

from src.config.settings import API_HOST, API_PORT, API_RELOAD


def main():
    uvicorn.run(
        "src.api.routes:app",
        host=API_HOST,
        port=API_PORT,
        reload=API_RELOAD
    )


if __name__ == "__main__":
    main()
