"""radorchestra CLI commands"""
