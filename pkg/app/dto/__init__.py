# Data Transfer Objects