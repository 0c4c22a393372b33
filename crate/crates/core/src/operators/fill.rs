//! Hole filling: dark regions enclosed by brighter contours are raised to
//! the contour level. Built as border-seeded reconstruction of the image
//! complement, then complemented back.

use crate::engine::{EngineVariant, RunStats};
use crate::grid::{Image2D, Neighborhood};
use crate::operators::recon::reconstruct;
use crate::pixelqueue::QueueKind;
use crate::{Error, Result};

/// Pointwise complement against the intensity ceiling.
pub fn complement(img: &Image2D, max_intensity: u32) -> Result<Image2D> {
    let mut out = Image2D::new(img.width(), img.height(), 0, 0).unwrap();
    for p in img.scan_raster() {
        let v = img.get(p);
        if v > max_intensity {
            let (x, y) = img.coords(p);
            return Err(Error::InvalidInput(format!(
                "value {v} at ({x}, {y}) exceeds the stated maximum intensity {max_intensity}"
            )));
        }
        out.set(p, max_intensity - v);
    }
    Ok(out)
}

/// Marker for the border flood: the complement on the outermost interior
/// ring, zero everywhere else.
pub(crate) fn border_marker(complemented: &Image2D) -> Image2D {
    let w = complemented.width();
    let h = complemented.height();
    let mut marker = Image2D::new(w, h, 0, 0).unwrap();
    for y in 0..h {
        for x in 0..w {
            if x == 0 || y == 0 || x == w - 1 || y == h - 1 {
                let a = complemented.addr(x, y);
                marker.set(a, complemented.get(a));
            }
        }
    }
    marker
}

/// Fills holes: regions not reachable from the border without climbing over
/// brighter pixels are raised to their enclosing contour. `max_intensity`
/// is the intensity ceiling (e.g. the PGM maxval).
pub fn fill_holes(
    img: &Image2D,
    max_intensity: u32,
    nb: &Neighborhood,
    variant: EngineVariant,
    kind: QueueKind,
) -> Result<(Image2D, RunStats)> {
    let mask = complement(img, max_intensity)?;
    let marker = border_marker(&mask);
    let (filled, stats) = reconstruct(&mask, &marker, nb, variant, kind)?;
    Ok((complement(&filled, max_intensity)?, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Connectivity;

    /// Independent flood-fill reference: complement the image, flood the
    /// complement from the border ring without climbing (4/8-neighbors,
    /// clamped minimum-of-path-maximum semantics via repeated sweeps),
    /// complement back. Implemented as the plain iterative dilation of the
    /// border marker under the complement mask.
    fn flood_fill_reference(img: &Image2D, max_intensity: u32, conn: Connectivity) -> Image2D {
        let mask = complement(img, max_intensity).unwrap();
        let nb = Neighborhood::for_image(conn, &mask);
        let mut cur = border_marker(&mask);
        loop {
            let prev = cur.clone();
            for p in mask.scan_raster() {
                let mut m = prev.get(p);
                for q in nb.neighbors_of(p) {
                    m = m.max(prev.get(q));
                }
                cur.set(p, m.min(mask.get(p)));
            }
            if cur == prev {
                break;
            }
        }
        complement(&cur, max_intensity).unwrap()
    }

    #[test]
    fn ring_center_is_filled() {
        let mut img = Image2D::new(5, 5, 0, 0).unwrap();
        for (x, y) in [
            (1, 1), (2, 1), (3, 1),
            (1, 2), (3, 2),
            (1, 3), (2, 3), (3, 3),
        ] {
            let a = img.addr(x, y);
            img.set(a, 255);
        }
        let nb = Neighborhood::for_image(Connectivity::N4, &img);
        let (out, _) = fill_holes(&img, 255, &nb, EngineVariant::TwoPhase, QueueKind::Fifo).unwrap();
        let center = img.addr(2, 2);
        assert_eq!(out.get(center), 255);
        assert_eq!(out.interior(), flood_fill_reference(&img, 255, Connectivity::N4).interior());
    }

    #[test]
    fn no_holes_means_no_change() {
        // Background touches every border; nothing is enclosed.
        let mut img = Image2D::new(6, 4, 0, 0).unwrap();
        for (x, y) in [(2, 1), (3, 1), (2, 2)] {
            let a = img.addr(x, y);
            img.set(a, 200);
        }
        let nb = Neighborhood::for_image(Connectivity::N4, &img);
        let (out, _) = fill_holes(&img, 255, &nb, EngineVariant::TwoPhase, QueueKind::Fifo).unwrap();
        assert_eq!(out.interior(), img.interior());
        assert_eq!(out.interior(), flood_fill_reference(&img, 255, Connectivity::N4).interior());
    }

    #[test]
    fn constant_image_unchanged() {
        let img = Image2D::new(4, 4, 77, 0).unwrap();
        let nb = Neighborhood::for_image(Connectivity::N8, &img);
        let (out, _) = fill_holes(&img, 255, &nb, EngineVariant::TwoPhase, QueueKind::Fifo).unwrap();
        assert_eq!(out.interior(), img.interior());
    }

    #[test]
    fn grayscale_shadows_are_raised() {
        // A bright rim around a darker pool: the pool rises to the dimmest
        // rim value on its escape routes.
        let img = Image2D::from_interior(
            4,
            4,
            &[
                9, 9, 9, 9, //
                9, 2, 3, 9, //
                9, 4, 1, 9, //
                9, 9, 9, 9,
            ],
            0,
        )
        .unwrap();
        let nb = Neighborhood::for_image(Connectivity::N4, &img);
        let (out, _) = fill_holes(&img, 9, &nb, EngineVariant::TwoPhase, QueueKind::Fifo).unwrap();
        assert_eq!(out.interior(), flood_fill_reference(&img, 9, Connectivity::N4).interior());
        // Everything inside the rim is raised to the rim level.
        assert_eq!(
            out.interior(),
            vec![9, 9, 9, 9, 9, 9, 9, 9, 9, 9, 9, 9, 9, 9, 9, 9]
        );
    }

    #[test]
    fn value_above_ceiling_rejected() {
        let img = Image2D::from_interior(2, 1, &[300, 0], 0).unwrap();
        let nb = Neighborhood::for_image(Connectivity::N4, &img);
        assert!(matches!(
            fill_holes(&img, 255, &nb, EngineVariant::TwoPhase, QueueKind::Fifo),
            Err(Error::InvalidInput(_))
        ));
    }
}
