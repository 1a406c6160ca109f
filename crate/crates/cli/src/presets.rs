//! Bundled experiment configs, addressed as `preset:<name>`.

const PRESETS: [(&str, &str); 13] = [
    ("table1", include_str!("../presets/table1.toml")),
    ("fig3", include_str!("../presets/fig3.toml")),
    ("fig7", include_str!("../presets/fig7.toml")),
    ("fig8", include_str!("../presets/fig8.toml")),
    ("fig9", include_str!("../presets/fig9.toml")),
    ("fig10", include_str!("../presets/fig10.toml")),
    ("fig11-a", include_str!("../presets/fig11-a.toml")),
    ("fig11-b", include_str!("../presets/fig11-b.toml")),
    ("fig11-c", include_str!("../presets/fig11-c.toml")),
    ("fig11-d", include_str!("../presets/fig11-d.toml")),
    ("fig11-e", include_str!("../presets/fig11-e.toml")),
    ("fig11-f", include_str!("../presets/fig11-f.toml")),
    ("fig12", include_str!("../presets/fig12.toml")),
];

pub fn names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(n, _)| *n)
}

pub fn get(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}
