//! Image containers and pixel-level operations.

mod blob;
mod filter;
pub mod io;
mod image;
mod morph;

pub use blob::{connected_components, convex_hull, BBox, Blob};
pub use filter::{box_filter, crop_patch, masked_box_filter, IntegralImage};
pub use image::{BinaryMask, Frame};
pub use morph::{dilate, erode, morph_open};
