"""Resource-crunch provisioning engine and simulator."""
