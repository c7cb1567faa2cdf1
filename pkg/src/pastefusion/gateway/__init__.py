"""HTTP gateway, service clients, configuration, and CLI."""
