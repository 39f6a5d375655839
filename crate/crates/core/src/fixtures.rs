// SPDX-License-Identifier: Apache-2.0

//! Bundled example designs.

pub const MOTIVATIONAL: &str = include_str!("../fixtures/motivational.dfg");
pub const FIG3: &str = include_str!("../fixtures/fig3.dfg");
pub const SATURATION: &str = include_str!("../fixtures/saturation.dfg");
pub const DIFFEQ: &str = include_str!("../fixtures/diffeq.dfg");
pub const ELLIPTIC: &str = include_str!("../fixtures/elliptic.dfg");

pub const ALL: [(&str, &str); 5] = [
    ("motivational", MOTIVATIONAL),
    ("fig3", FIG3),
    ("saturation", SATURATION),
    ("diffeq", DIFFEQ),
    ("elliptic", ELLIPTIC),
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_fixture_parses() {
        for (name, text) in ALL {
            let g = crate::dsl::parse(text).unwrap_or_else(|e| panic!("{name}: {e:?}"));
            assert_eq!(g.name, name);
        }
    }
}
