# Tests for the automap package
