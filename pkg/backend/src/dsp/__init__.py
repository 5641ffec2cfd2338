# Front-end package initialization
