# Test package for radorchestra
