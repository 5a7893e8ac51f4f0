//! Shared fixtures for the integration suites.

use gslr_core::image::Image;

/// Deterministic grayscale test scene with natural-image statistics:
/// smooth shading, sharp edges, and repeating texture that gives the
/// nonlocal matcher something to find.
pub fn natural_image(width: usize, height: usize) -> Image {
    Image::from_fn(width, height, |r, c| {
        let x = c as f64 / width as f64;
        let y = r as f64 / height as f64;
        let (rf, cf) = (r as f64, c as f64);

        // Smooth background ramp.
        let mut v = 80.0 + 55.0 * x + 25.0 * y;

        // Fine oriented grating over everything: highly self-similar
        // texture that pointwise interpolation cannot reproduce.
        v += 30.0 * (cf * 0.9 + rf * 0.2).sin();

        // Coarser stripe band across the top.
        if y < 0.32 {
            v += 26.0 * (cf * 0.45).sin();
        }

        // Shaded disc.
        let dx = x - 0.64;
        let dy = y - 0.34;
        let rr = dx * dx + dy * dy;
        if rr < 0.045 {
            v = 225.0 - 1400.0 * rr + 14.0 * (cf * 0.9).sin();
        }

        // Textured dark block with its own checker weave.
        if (0.12..0.42).contains(&x) && (0.55..0.88).contains(&y) {
            v = 60.0 + 24.0 * (rf * 0.8).sin() * (cf * 0.8).cos();
        }

        // Diagonal wedge with a steeper grating.
        if x + y > 1.62 {
            v = 40.0 + 45.0 * x + 20.0 * ((rf - cf) * 0.7).sin();
        }

        v.clamp(0.0, 255.0)
    })
}
