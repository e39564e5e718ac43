# Storage package
