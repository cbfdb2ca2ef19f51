# Makes the src folder a Python package