"""E2E tests"""

