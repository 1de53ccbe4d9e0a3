# Process configuration, logging, seeding and error reporting
