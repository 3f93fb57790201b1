# Role-tagged dataset model
