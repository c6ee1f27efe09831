//! Category colours, shapes and the attribute salience table.

use crate::attributes::{bundled_attributes, bundled_categories};

pub const FLOOR_COLOR: [u8; 3] = [128, 128, 128];
pub const WALL_COLOR: [u8; 3] = [200, 200, 190];
pub const SKY_COLOR: [u8; 3] = [0, 0, 0];

/// Appearance and size of one furniture category.
///
/// Part cells rise to `height` and show `part` above `part_low`; the other cells stop
/// at `part_low`. From the front this puts the part colour in a band over the body.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CategoryStyle {
    pub name: &'static str,
    pub body: [u8; 3],
    pub part: [u8; 3],
    /// `(depth, width)` in 0.1 m cells, with the back along the far depth edge.
    pub footprint: (usize, usize),
    /// Rows along the back of the footprint that form the part; 0 means all of it.
    pub part_rows: usize,
    pub height: f64,
    pub part_low: f64,
}

const STYLES: [CategoryStyle; 6] = [
    CategoryStyle {
        name: "chair",
        body: [150, 90, 40],
        part: [220, 60, 30],
        footprint: (5, 5),
        part_rows: 1,
        height: 0.9,
        part_low: 0.45,
    },
    CategoryStyle {
        name: "sofa",
        body: [60, 90, 160],
        part: [40, 60, 120],
        footprint: (9, 20),
        part_rows: 2,
        height: 0.85,
        part_low: 0.45,
    },
    CategoryStyle {
        name: "bed",
        body: [230, 230, 240],
        part: [120, 70, 50],
        footprint: (20, 16),
        part_rows: 1,
        height: 1.0,
        part_low: 0.5,
    },
    CategoryStyle {
        name: "toilet",
        body: [245, 245, 250],
        part: [210, 215, 225],
        footprint: (7, 5),
        part_rows: 2,
        height: 0.75,
        part_low: 0.4,
    },
    CategoryStyle {
        name: "tv",
        body: [30, 30, 30],
        part: [20, 40, 90],
        footprint: (3, 10),
        part_rows: 0,
        height: 1.2,
        part_low: 0.5,
    },
    CategoryStyle {
        name: "plant",
        body: [110, 70, 40],
        part: [40, 150, 50],
        footprint: (4, 4),
        part_rows: 0,
        height: 1.0,
        part_low: 0.35,
    },
];

pub fn category_style(category: &str) -> Option<&'static CategoryStyle> {
    STYLES.iter().find(|s| s.name == category)
}

pub fn all_styles() -> &'static [CategoryStyle] {
    &STYLES
}

// (category, attribute, body salience, part salience) for attributes a category shares
// with other categories' lists.
const CROSS: &[(&str, &str, f64, f64)] = &[
    ("sofa", "seat", 0.2, 0.1),
    ("sofa", "armrest", 0.1, 0.3),
    ("sofa", "resting", 0.4, 0.2),
    ("sofa", "pillows", 0.2, 0.2),
    ("chair", "cushions", 0.1, 0.1),
    ("chair", "armrests", 0.1, 0.3),
    ("chair", "long seat", 0.1, 0.0),
    ("chair", "lounging", 0.2, 0.1),
    ("toilet", "seat", 0.1, 0.3),
    ("toilet", "lid", 0.0, 0.0),
    ("bed", "resting", 0.4, 0.1),
    ("bed", "lounging", 0.3, 0.1),
    ("bed", "cushions", 0.3, 0.1),
    ("bed", "sitting", 0.2, 0.0),
    ("tv", "screen", 0.0, 0.0),
];

fn own_attributes(category: &str) -> Option<(Vec<String>, Vec<String>)> {
    bundled_attributes(category).map(|s| (s.geometric, s.affordance))
}

/// Planted salience of `attribute` for a category's body or part colour, in [0, 1].
///
/// A category's own geometric parts are strongest on its part colour, its own
/// affordances on its body colour; shared words between categories get the weaker
/// cross entries, everything else zero.
pub fn salience(category: &str, part: bool, attribute: &str) -> f64 {
    let attribute = attribute.trim().to_lowercase();
    if let Some((geometric, affordance)) = own_attributes(category) {
        if geometric.iter().any(|g| *g == attribute) {
            return if part { 1.0 } else { 0.4 };
        }
        if affordance.iter().any(|a| *a == attribute) {
            return if part { 0.5 } else { 0.8 };
        }
    }
    CROSS
        .iter()
        .find(|(c, a, _, _)| *c == category && *a == attribute)
        .map(|&(_, _, body, p)| if part { p } else { body })
        .unwrap_or(0.0)
}

/// Every known category, in a stable order.
pub fn categories() -> Vec<&'static str> {
    STYLES
        .iter()
        .map(|s| s.name)
        .filter(|n| bundled_categories().any(|b| b == *n))
        .collect()
}
