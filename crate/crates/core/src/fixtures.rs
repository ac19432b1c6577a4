//! System documents shipped with the library: the survey of popular sites,
//! a vague-purpose example, a system without AI, and a small demo system.

use crate::document::SystemDocument;

/// A named, embedded system document.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Fixture {
    pub name: &'static str,
    pub json: &'static str,
}

impl Fixture {
    pub fn document(&self) -> SystemDocument {
        SystemDocument::parse(self.json).expect("embedded fixtures parse")
    }
}

macro_rules! fixture {
    ($name:literal, $path:literal) => {
        Fixture {
            name: $name,
            json: include_str!(concat!("../fixtures/", $path)),
        }
    };
}

/// The surveyed sites, in survey order.
pub const SURVEY: &[Fixture] = &[
    fixture!("survey/google", "survey/google.json"),
    fixture!("survey/facebook", "survey/facebook.json"),
    fixture!("survey/youtube", "survey/youtube.json"),
    fixture!("survey/instagram", "survey/instagram.json"),
    fixture!("survey/twitter", "survey/twitter.json"),
    fixture!("survey/amazon", "survey/amazon.json"),
    fixture!("survey/netflix", "survey/netflix.json"),
    fixture!("survey/reddit", "survey/reddit.json"),
    fixture!("survey/tiktok", "survey/tiktok.json"),
    fixture!("survey/discord", "survey/discord.json"),
    fixture!("survey/twitch", "survey/twitch.json"),
    fixture!("survey/fandom", "survey/fandom.json"),
    fixture!("survey/accuweather", "survey/accuweather.json"),
    fixture!("survey/whatsapp", "survey/whatsapp.json"),
    fixture!("survey/wikipedia", "survey/wikipedia.json"),
    fixture!("survey/duckduckgo", "survey/duckduckgo.json"),
    fixture!("survey/github", "survey/github.json"),
    fixture!("survey/wordpress", "survey/wordpress.json"),
    fixture!("survey/openstreetmap", "survey/openstreetmap.json"),
];

pub const VAGUE_PURPOSE: Fixture = fixture!("vague-purpose", "vague-purpose.json");
pub const EMPTY_SYSTEM: Fixture = fixture!("empty-system", "empty-system.json");
pub const DEMO: Fixture = fixture!("navi", "navi.json");

pub fn all() -> impl Iterator<Item = Fixture> {
    SURVEY
        .iter()
        .copied()
        .chain([VAGUE_PURPOSE, EMPTY_SYSTEM, DEMO])
}

pub fn by_name(name: &str) -> Option<Fixture> {
    all().find(|f| f.name == name || f.name.strip_prefix("survey/") == Some(name))
}
