//! Scenario presets compiled into the binary.

pub struct Preset {
    pub name: &'static str,
    pub source: &'static str,
}

macro_rules! preset {
    ($name:literal) => {
        Preset {
            name: $name,
            source: include_str!(concat!("../scenarios/", $name, ".toml")),
        }
    };
}

pub const ALL: &[Preset] = &[
    preset!("fig2_row1"),
    preset!("fig2_row2"),
    preset!("fig3_resonant"),
    preset!("fig3_detuned"),
    preset!("fig4_w3"),
    preset!("fig5_n3w2"),
    preset!("prop5_roots"),
    preset!("prop6_search"),
];

pub fn find(name: &str) -> Option<&'static Preset> {
    ALL.iter().find(|p| p.name == name)
}
