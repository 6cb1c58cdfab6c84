use std::path::Path;

use anyhow::Context;
use armadesign::{io, DesignSpec};

use crate::Failure;

/// A design argument: a JSON file, or one of `ur`, `at`, `ad-limit`,
/// `ad:TAU`, `switchback:M`, `markov:ALPHA[:BETA]`.
pub fn parse_design(arg: &str) -> Result<DesignSpec, Failure> {
    let arg = arg.trim();
    if arg.ends_with(".json") || Path::new(arg).is_file() {
        let spec: DesignSpec = io::read_json(arg).with_context(|| format!("reading design {arg}"))?;
        return Ok(spec);
    }
    let usage = |why: &str| Failure::Usage(format!("design '{arg}': {why}"));
    let mut parts = arg.split(':');
    let name = parts.next().unwrap_or_default().to_ascii_lowercase();
    let nums: Vec<&str> = parts.collect();
    let int = |s: &str| s.parse::<usize>().map_err(|_| usage("expected a positive integer"));
    let real = |s: &str| s.parse::<f64>().map_err(|_| usage("expected a number"));
    let spec = match (name.as_str(), nums.as_slice()) {
        ("ur", []) => Ok(DesignSpec::ur()),
        ("at", []) => Ok(DesignSpec::at()),
        ("ad-limit", []) => Ok(DesignSpec::ad_limit()),
        ("ad", [tau]) => DesignSpec::ad(int(tau)?),
        ("switchback", [m]) => DesignSpec::switchback(int(m)?),
        ("markov", [a]) => DesignSpec::balanced_markov(real(a)?),
        ("markov", [a, b]) => DesignSpec::markov(real(a)?, real(b)?),
        _ => return Err(usage("not a JSON file or a known shorthand")),
    };
    spec.map_err(|e| usage(&e.to_string()))
}
