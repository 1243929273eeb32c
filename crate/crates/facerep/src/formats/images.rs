//! Image files. Anything the `image` crate decodes can be read; crops are
//! written as binary PGM (P5).

use std::path::Path;

use facerep_core::faceproc::{to_gray, GrayImage};
use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{DynamicImage, ExtendedColorType, ImageEncoder};

/// Reads an image as gray levels in `[0, 1]`. Color images are converted
/// with the BT.601 luma weights.
pub fn read_gray(path: &Path) -> Result<GrayImage, image::ImageError> {
    let img = image::open(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let gray = match img {
        DynamicImage::ImageLuma8(g) => GrayImage::from_u8(w, h, g.as_raw()),
        other => {
            let rgb: Vec<[f64; 3]> = other
                .to_rgb8()
                .pixels()
                .map(|p| p.0.map(|c| f64::from(c) / 255.0))
                .collect();
            to_gray(w, h, &rgb)
        }
    };
    gray.map_err(|e| {
        image::ImageError::Decoding(image::error::DecodingError::new(
            image::error::ImageFormatHint::Unknown,
            e.to_string(),
        ))
    })
}

pub fn write_pgm(path: &Path, image: &GrayImage) -> Result<(), image::ImageError> {
    let mut bytes = Vec::new();
    PnmEncoder::new(&mut bytes)
        .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
        .write_image(&image.to_u8(), image.width() as u32, image.height() as u32, ExtendedColorType::L8)?;
    std::fs::write(path, bytes).map_err(image::ImageError::IoError)
}
