//! Image representations and numerical primitives shared by every stage.

mod canny;
mod components;
mod fft;
mod filter;
mod image;
mod io;
mod pgm;

pub use canny::canny_edges;
pub use components::{connected_components, BinaryMask, Component};
pub use fft::{dft2d, idft2d, idft2d_complex, magnitude_phase, ComplexSpectrum, Fft2d, FftWork};
pub use filter::{box_filter, gaussian_filter, gaussian_kernel};
pub use image::{BBox, GrayImage, RealField};
pub use io::{decode_png, read_image};
pub use pgm::{decode_pgm, encode_pgm, read_pgm, write_pgm};
