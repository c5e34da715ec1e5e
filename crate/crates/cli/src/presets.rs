//! Shipped experiment configurations.
//!
//! Every preset is a JSON file under `presets/`, embedded into the binary so
//! `list-presets` and `run` work from any working directory. The `covers`
//! field cross-references the acceptance-suite rows exercised by the preset;
//! negative presets demonstrate the failure exits.

pub struct Preset {
    pub name: &'static str,
    pub experiment: &'static str,
    pub file: &'static str,
    pub content: &'static str,
    /// Acceptance-suite rows this preset exercises (1-based).
    pub covers: &'static [u8],
    /// Expected to fail with the given exit code, when nonzero.
    pub expect_exit: i32,
}

macro_rules! preset {
    ($name:literal, $experiment:literal, $covers:expr, $exit:expr) => {
        Preset {
            name: $name,
            experiment: $experiment,
            file: concat!("presets/", $name, ".json"),
            content: include_str!(concat!("../presets/", $name, ".json")),
            covers: $covers,
            expect_exit: $exit,
        }
    };
}

pub const PRESETS: &[Preset] = &[
    preset!("entropy-doubling", "entropy", &[1], 0),
    preset!("entropy-periodic-23", "entropy", &[2], 0),
    preset!("pressure-doubling-neglog", "pressure", &[3, 4], 0),
    preset!("pressure-perturbed-neglog", "pressure", &[3, 4], 0),
    preset!("pressure-doubling-zero", "pressure", &[4], 0),
    preset!("pressure-doubling-const", "pressure", &[4], 0),
    preset!("pressure-doubling-trig", "pressure", &[4], 0),
    preset!("pressure-perturbed-zero", "pressure", &[4], 0),
    preset!("pressure-periodic-zero", "pressure", &[4], 0),
    preset!("pressure-periodic-neglog", "pressure", &[4], 0),
    preset!("memoryloss-perturbed", "memoryloss", &[5], 0),
    preset!("transfer-diagnostics", "memoryloss", &[10], 0),
    preset!("volume-linear", "volume", &[6], 0),
    preset!("volume-perturbed", "volume", &[6], 0),
    preset!("conjugacy-perturbed", "conjugacy", &[7], 0),
    preset!("expansivity-alternating", "expansivity", &[8], 0),
    preset!("expansivity-growing", "expansivity", &[8], 0),
    preset!("expansivity-doubling", "expansivity", &[8], 0),
    preset!("frink-doubling", "frink", &[9], 0),
    // negative presets: each numeric failure path has a shipped config
    preset!("neg-invalid-degree", "entropy", &[], 2),
    preset!("neg-entropy-cell-blowup", "entropy", &[], 3),
    preset!("neg-entropy-branch-tolerance", "entropy", &[], 3),
    preset!("neg-conjugacy-degree-mismatch", "conjugacy", &[], 3),
    preset!("neg-conjugacy-tail-mismatch", "conjugacy", &[], 3),
    preset!("neg-conjugacy-no-convergence", "conjugacy", &[], 3),
    preset!("neg-volume-radius-too-large", "volume", &[], 3),
    preset!("neg-frink-depth-insufficient", "frink", &[], 3),
    preset!("neg-frink-not-expansive", "frink", &[], 3),
    preset!("neg-memoryloss-kappa", "memoryloss", &[], 3),
];

pub fn find(name: &str) -> Option<&'static Preset> {
    PRESETS.iter().find(|p| p.name == name)
}

/// Human-readable listing, one preset per line.
pub fn listing() -> String {
    let mut out = String::new();
    out.push_str("name                              experiment   covers     file\n");
    for p in PRESETS {
        let covers = if p.expect_exit != 0 {
            format!("exit {}", p.expect_exit)
        } else if p.covers.is_empty() {
            "-".to_string()
        } else {
            p.covers
                .iter()
                .map(|c| c.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        out.push_str(&format!(
            "{:<33} {:<12} {:<10} {}\n",
            p.name, p.experiment, covers, p.file
        ));
    }
    out
}
