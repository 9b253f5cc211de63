//! Guided EDM sampling.
