//! Bundled example templates. They are synthetic stand-ins shaped like
//! extracellular spikes, not waveforms taken from a recording.

use spikedict_core::signal::Dictionary;

use crate::error::{Error, Result};
use crate::formats::parse_dictionary;

pub const THREE_45: &str = include_str!("../data/three_45.json");
pub const TWO_30: &str = include_str!("../data/two_30.json");

pub const NAMES: [&str; 2] = ["three_45", "two_30"];

/// Three templates of 45 samples.
pub fn three_45() -> Dictionary {
    parse_dictionary(THREE_45).expect("bundled dictionary is valid")
}

/// Two templates of 30 samples.
pub fn two_30() -> Dictionary {
    parse_dictionary(TWO_30).expect("bundled dictionary is valid")
}

pub fn by_name(name: &str) -> Result<Dictionary> {
    match name {
        "three_45" => Ok(three_45()),
        "two_30" => Ok(two_30()),
        _ => Err(Error::Config(format!(
            "unknown bundled dictionary {name:?}; available: {}",
            NAMES.join(", ")
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_shapes() {
        let d = three_45();
        assert_eq!((d.num_atoms(), d.template_length()), (3, 45));
        let d = two_30();
        assert_eq!((d.num_atoms(), d.template_length()), (2, 30));
        for t in d.templates() {
            assert!(t.peak().1 < 0.0);
        }
        assert!(by_name("nope").is_err());
    }
}
