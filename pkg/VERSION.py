lab_version = "v0.4.0"
