//! Named coefficient and weight presets.

use swave::spatial::Profile;

#[derive(Clone, Debug)]
pub struct Preset {
    pub name: &'static str,
    pub summary: &'static str,
    pub length: f64,
    pub horizon: f64,
    pub a: Profile,
    pub lower: [Profile; 5],
    pub x0: f64,
    pub alpha: f64,
    pub lambda: f64,
}

pub const DEFAULT: &str = "remark-rm2";

const ZERO: Profile = Profile::Constant(0.0);

/// Sorted by name.
pub const PRESETS: [Preset; 3] = [
    Preset {
        name: "remark-rm2",
        summary: "a = 1 on (0,1), phi = 4 (x + 1)^2, T = 1.5 T0",
        length: 1.0,
        horizon: 12.0,
        a: Profile::Constant(1.0),
        lower: [ZERO; 5],
        x0: -1.0,
        alpha: 4.0,
        lambda: 1.0,
    },
    Preset {
        name: "variable-coefficients",
        summary: "a = 1 + x/2 with smooth a1..a5 (a5 vanishing at both ends)",
        length: 1.0,
        horizon: 12.0,
        a: Profile::Affine {
            intercept: 1.0,
            slope: 0.5,
        },
        lower: [
            Profile::Affine {
                intercept: 0.2,
                slope: -0.1,
            },
            Profile::Constant(0.3),
            Profile::Sine {
                base: 0.2,
                amplitude: 0.1,
                wavenumber: 3.0,
            },
            Profile::Constant(-0.25),
            Profile::Sine {
                base: 0.0,
                amplitude: 0.2,
                wavenumber: std::f64::consts::PI,
            },
        ],
        x0: -1.0,
        alpha: 4.0,
        lambda: 1.0,
    },
    Preset {
        name: "zero-coefficients",
        summary: "a = 1, a1..a5 = 0: the deterministic wave in stochastic clothing",
        length: 1.0,
        horizon: 12.0,
        a: Profile::Constant(1.0),
        lower: [ZERO; 5],
        x0: -1.0,
        alpha: 4.0,
        lambda: 1.0,
    },
];

pub fn find(name: &str) -> Option<&'static Preset> {
    PRESETS.iter().find(|p| p.name == name)
}

pub fn describe(p: Profile) -> String {
    match p {
        Profile::Constant(c) => format!("{c}"),
        Profile::Affine { intercept, slope } => format!("{intercept}{slope:+}x"),
        Profile::Sine {
            base,
            amplitude,
            wavenumber,
        } => format!("{base}{amplitude:+}sin({wavenumber}x)"),
    }
}

/// Stable, sorted text table.
pub fn table() -> String {
    let mut names: Vec<&Preset> = PRESETS.iter().collect();
    names.sort_by_key(|p| p.name);
    let mut out = format!(
        "{:<24} {:>4} {:>6} {:>6} {:>6}  {}\n",
        "name", "L", "T", "x0", "alpha", "description"
    );
    for p in names {
        out.push_str(&format!(
            "{:<24} {:>4} {:>6} {:>6} {:>6}  {}\n",
            p.name, p.length, p.horizon, p.x0, p.alpha, p.summary
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_sorted_and_unique() {
        let names: Vec<_> = PRESETS.iter().map(|p| p.name).collect();
        let mut sorted = names.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(names, sorted);
        assert!(find(DEFAULT).is_some());
    }

    #[test]
    fn table_lists_every_preset() {
        let t = table();
        assert!(PRESETS.iter().all(|p| t.contains(p.name)));
        assert_eq!(t, table());
    }
}
