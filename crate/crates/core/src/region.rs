//! Simple planar regions used as indicator supports (weights `w`, coverage
//! sets `Z`).

/// Closed planar region. Membership is inclusive of the boundary.
#[derive(Clone, Debug, PartialEq)]
pub enum Region {
    Ball { center: [f64; 2], radius: f64 },
    Rect { min: [f64; 2], max: [f64; 2] },
}

impl Region {
    pub fn contains(&self, p: [f64; 2]) -> bool {
        match *self {
            Region::Ball { center, radius } => {
                let dx = p[0] - center[0];
                let dy = p[1] - center[1];
                dx * dx + dy * dy <= radius * radius
            }
            Region::Rect { min, max } => {
                p[0] >= min[0] && p[0] <= max[0] && p[1] >= min[1] && p[1] <= max[1]
            }
        }
    }

    /// Closed polyline tracing the region boundary (first point repeated at
    /// the end). Balls use `segments` chords.
    pub fn boundary_polyline(&self, segments: usize) -> Vec<[f64; 2]> {
        match *self {
            Region::Ball { center, radius } => {
                let segments = segments.max(8);
                (0..=segments)
                    .map(|k| {
                        let theta =
                            2.0 * std::f64::consts::PI * (k % segments) as f64 / segments as f64;
                        [
                            center[0] + radius * theta.cos(),
                            center[1] + radius * theta.sin(),
                        ]
                    })
                    .collect()
            }
            Region::Rect { min, max } => vec![
                [min[0], min[1]],
                [max[0], min[1]],
                [max[0], max[1]],
                [min[0], max[1]],
                [min[0], min[1]],
            ],
        }
    }
}
