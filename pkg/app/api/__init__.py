# API modules
