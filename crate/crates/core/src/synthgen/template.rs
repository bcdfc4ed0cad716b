use crate::dataset::{ImageSize, Keypoint, KeypointSet, NUM_KEYPOINTS};
use crate::error::{Error, Result};

const HALF: usize = NUM_KEYPOINTS / 2;

/// Confidence given to keypoints on the far side of the vehicle.
pub const OCCLUDED_CONFIDENCE: f64 = 0.2;
/// Fraction of the shorter image side covered by the projected template.
pub const FIT_FRACTION: f64 = 0.8;

/// Left-side landmarks in model coordinates: x forward, y left, z up. The
/// right side mirrors these with `y -> -y` at index `i + 18`.
const LEFT_SIDE: [[f64; 3]; HALF] = [
    [1.35, 0.9, 0.33],   // front wheel
    [-1.35, 0.9, 0.33],  // rear wheel
    [1.75, 0.9, 0.7],    // front fender, front edge
    [0.95, 0.9, 0.7],    // front fender, rear edge
    [-0.95, 0.9, 0.7],   // rear fender, front edge
    [-1.75, 0.9, 0.7],   // rear fender, rear edge
    [-2.2, 0.85, 0.25],  // rear bumper bottom
    [-2.2, 0.85, 0.55],  // rear bumper top
    [-2.15, 0.8, 0.8],   // tail light
    [-2.05, 0.75, 0.95], // trunk rear corner
    [-1.45, 0.7, 1.0],   // rear window bottom
    [-0.8, 0.6, 1.4],    // rear window top
    [0.35, 0.6, 1.4],    // front window top
    [2.2, 0.85, 0.25],   // front bumper bottom
    [2.2, 0.85, 0.55],   // front bumper top
    [2.15, 0.8, 0.72],   // headlight
    [2.05, 0.75, 0.85],  // hood front corner
    [1.0, 0.7, 1.0],     // hood rear corner
];

/// Length, width and height multipliers of each body style.
const BODY_STYLES: [(&str, [f64; 3]); 6] = [
    ("sedan", [1.0, 1.0, 1.0]),
    ("sports", [1.15, 1.0, 0.65]),
    ("hatchback", [0.75, 1.0, 1.1]),
    ("suv", [0.85, 1.05, 1.45]),
    ("van", [0.75, 1.05, 2.0]),
    ("bus", [1.8, 1.15, 1.6]),
];

pub const MAX_BODY_STYLES: usize = BODY_STYLES.len();

/// 36 mirror-symmetric 3D keypoints of a car-like wireframe.
#[derive(Debug, Clone, PartialEq)]
pub struct TemplateModel {
    pub name: String,
    pub points: [[f64; 3]; NUM_KEYPOINTS],
}

impl TemplateModel {
    fn scaled(name: &str, [sx, sy, sz]: [f64; 3]) -> Self {
        let points = std::array::from_fn(|k| {
            let [x, y, z] = LEFT_SIDE[k % HALF];
            let side = if k < HALF { 1.0 } else { -1.0 };
            [x * sx, side * y * sy, z * sz]
        });
        Self { name: name.to_string(), points }
    }

    /// The base car shape.
    pub fn sedan() -> Self {
        Self::body_style(0).expect("style 0 exists")
    }

    /// One of the built-in body styles, indexed by vehicle type.
    pub fn body_style(index: usize) -> Result<Self> {
        BODY_STYLES
            .get(index)
            .map(|(name, s)| Self::scaled(name, *s))
            .ok_or_else(|| Error::invalid(format!("only {MAX_BODY_STYLES} body styles exist, asked for {index}")))
    }

    pub fn style_name(index: usize) -> Option<&'static str> {
        BODY_STYLES.get(index).map(|(n, _)| *n)
    }

    fn centroid(&self) -> [f64; 3] {
        let mut c = [0.0; 3];
        for p in &self.points {
            for a in 0..3 {
                c[a] += p[a];
            }
        }
        c.map(|v| v / NUM_KEYPOINTS as f64)
    }

    fn radius(&self) -> f64 {
        self.points
            .iter()
            .map(|p| (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt())
            .fold(0.0, f64::max)
    }
}

/// Rotates the model by `azimuth` (yaw about the vertical axis) then by
/// `elevation` (camera pitch), and projects orthographically. Azimuth 0 looks
/// at the front of the vehicle, elevation 90 looks straight down. The whole
/// template fits in 80% of the shorter image side at any angle.
///
/// Points whose offset from the centroid faces away from the camera get
/// confidence 0.2, the rest 1.
pub fn project_template(
    template: &TemplateModel,
    azimuth_deg: f64,
    elevation_deg: f64,
    image_size: ImageSize,
) -> Result<KeypointSet> {
    if image_size.width == 0 || image_size.height == 0 {
        return Err(Error::invalid("image dimensions must be positive"));
    }
    if !azimuth_deg.is_finite() || !elevation_deg.is_finite() {
        return Err(Error::NonFinite { context: "view angles".into() });
    }
    let (w, h) = (f64::from(image_size.width), f64::from(image_size.height));
    let scale = FIT_FRACTION * w.min(h) / (2.0 * template.radius());
    let (st, ct) = azimuth_deg.to_radians().sin_cos();
    let (sp, cp) = elevation_deg.to_radians().sin_cos();
    let view = |[x, y, z]: [f64; 3]| {
        let xr = x * ct - y * st;
        let yr = x * st + y * ct;
        let depth = xr * cp + z * sp;
        let up = -xr * sp + z * cp;
        (yr, up, depth)
    };
    let (_, _, center_depth) = view(template.centroid());
    let points = template.points.map(|p| {
        let (u, up, depth) = view(p);
        let confidence = if depth - center_depth >= 0.0 { 1.0 } else { OCCLUDED_CONFIDENCE };
        Keypoint::new(w / 2.0 + scale * u, h / 2.0 - scale * up, confidence)
    });
    KeypointSet::new(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::posegeom::{flip_horizontal, KeypointLayout};

    const SIZE: ImageSize = ImageSize::new(256, 256);

    #[test]
    fn template_is_mirror_symmetric() {
        let layout = KeypointLayout::default();
        for style in 0..MAX_BODY_STYLES {
            let t = TemplateModel::body_style(style).unwrap();
            for (a, b) in layout.flip_pairs.pairs() {
                let (p, q) = (t.points[*a], t.points[*b]);
                assert_eq!([p[0], -p[1], p[2]], q);
            }
        }
        assert!(TemplateModel::body_style(MAX_BODY_STYLES).is_err());
    }

    #[test]
    fn frontal_view_mirrors_about_centerline() {
        let kps = project_template(&TemplateModel::sedan(), 0.0, 0.0, SIZE).unwrap();
        for k in 0..HALF {
            let (l, r) = (kps.get(k), kps.get(k + HALF));
            assert!((l.x - 128.0 + (r.x - 128.0)).abs() < 1e-12);
            assert_eq!(l.y, r.y);
        }
    }

    #[test]
    fn front_and_back_views_reflect() {
        let t = TemplateModel::sedan();
        let front = project_template(&t, 0.0, 0.0, SIZE).unwrap();
        let back = project_template(&t, 180.0, 0.0, SIZE).unwrap();
        for k in 0..NUM_KEYPOINTS {
            assert!((front.get(k).x - 128.0 + (back.get(k).x - 128.0)).abs() < 1e-9);
        }
        // The front face is visible from the front only.
        assert_eq!(front.get(15).confidence, 1.0);
        assert_eq!(back.get(15).confidence, OCCLUDED_CONFIDENCE);
    }

    #[test]
    fn top_down_shows_roof() {
        let kps = project_template(&TemplateModel::sedan(), 37.0, 90.0, SIZE).unwrap();
        for k in [11, 12, 29, 30, 10, 28, 17, 35] {
            assert_eq!(kps.get(k).confidence, 1.0, "keypoint {k}");
        }
    }

    #[test]
    fn flipped_view_is_mirrored_azimuth() {
        let layout = KeypointLayout::default();
        let t = TemplateModel::body_style(3).unwrap();
        for az in [0.0, 30.0, 95.0, 200.0, 333.0] {
            let a = flip_horizontal(&project_template(&t, az, 12.0, SIZE).unwrap(), 256.0, &layout.flip_pairs);
            let b = project_template(&t, -az, 12.0, SIZE).unwrap();
            for (p, q) in a.points().iter().zip(b.points()) {
                assert!((p.x - q.x).abs() < 1e-9 && (p.y - q.y).abs() < 1e-9);
                assert_eq!(p.confidence, q.confidence);
            }
        }
    }

    #[test]
    fn fits_inside_image() {
        for style in 0..MAX_BODY_STYLES {
            let t = TemplateModel::body_style(style).unwrap();
            for az in (0..360).step_by(15) {
                let kps = project_template(&t, f64::from(az), 25.0, SIZE).unwrap();
                for p in kps.points() {
                    assert!((25.6..=230.4).contains(&p.x) && (25.6..=230.4).contains(&p.y));
                }
            }
        }
    }

    #[test]
    fn rejects_degenerate_size() {
        assert!(project_template(&TemplateModel::sedan(), 0.0, 0.0, ImageSize::new(0, 5)).is_err());
    }
}
