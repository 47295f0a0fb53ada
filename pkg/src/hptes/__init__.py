"""Heat-pump and stratified-storage plant modelling with mixed-integer economic MPC."""
