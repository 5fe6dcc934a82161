"""Random streams and the samplers used by the Gibbs engine."""
