//! Browser bindings for the gercalc library (placeholder until the core
//! algebra modules land).
