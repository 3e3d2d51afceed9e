pub mod algebra;
pub mod cayley;
pub mod perfect;
pub mod expander;
pub mod grigorchuk;
pub mod distortion;
pub mod imbed;
pub mod wreath;
pub mod pipeline;
