//! Deterministic demo corpus and response fixtures.
//!
//! Everything here is synthesized from constants and a seeded generator, so
//! the demo tree is byte-identical on every machine. The dataset is a small
//! invented novel summarized by two "study guides"; the response fixtures
//! contain paraphrases produced by two mock models whose substitution rates
//! differ, which gives the analysis pipeline realistic dynamics: tight
//! temperature-0 groups, looser temperature-1 groups, and a newer mock model
//! that repeats itself more than the older one.

use std::path::{Path, PathBuf};

use serde_json::json;

use crate::config::KvDocument;
use crate::corpus::{CorpusError, ModelSpec};
use crate::rng::SplitMix64;
use crate::similarity::Temperature;

/// Chapter key, primary-guide summary, optional control-guide summary.
struct DemoChapter {
    key: &'static str,
    primary: &'static str,
    control: Option<&'static str>,
}

const CHAPTERS: &[DemoChapter] = &[
    DemoChapter {
        key: "harbor-01",
        primary: "Mara returns to the harbor town of Vell after ten years away and finds the \
glassworks closed and the quay silent. Her uncle Tomas, once the master glassblower, now keeps \
the lighthouse and refuses to speak about the night the furnace went dark. Mara walks the old \
streets and notices that every window facing the sea has been replaced with plain boards. At \
the inn she meets Sefa, the ferry keeper, who tells her that the town council banned glass \
after the wreck of the Lantern Maid. Mara does not believe the official story. She climbs to \
the lighthouse at dusk and asks Tomas directly. He gives her only a key of green glass and a \
warning to leave the harbor before the winter fog settles over the water.",
        control: Some(
            "After a decade abroad, Mara comes home to Vell and is troubled by what she sees. \
The famous glassworks stands shuttered, boarded windows face the waterfront, and nobody will \
say why. Sefa, who runs the ferry, repeats the council line that glassmaking ended after the \
Lantern Maid sank. Her uncle Tomas, formerly the master of the furnace, tends the lighthouse \
and avoids her questions. When Mara presses him at nightfall he hands over a small key made of \
green glass and urges her to be gone before the fog season arrives.",
        ),
    },
    DemoChapter {
        key: "harbor-02",
        primary: "The green key opens a cellar beneath the ruined glassworks where Mara \
discovers a workshop untouched by dust. Rows of unfinished lenses line the benches, each one \
etched with a spiral mark she remembers from her mother's sketchbooks. A ledger on the desk \
records shipments to the lighthouse dated long after the furnace supposedly failed. While she \
reads, the tide bell rings although the water is calm, and Sefa appears at the cellar door \
carrying a lantern. Sefa admits that the council still pays for lenses in secret and that the \
ban on glass was staged for outsiders. The two women agree to test one of the finished lenses \
that night, and what they see through it changes everything: the harbor lights are not \
reflections at all but signals coming from beneath the bay.",
        control: Some(
            "Using the glass key, Mara enters a hidden cellar below the old works. The room is \
clean and busy with work: benches of half-ground lenses, each cut with the spiral emblem from \
her mother's drawings, and a ledger proving deliveries to the lighthouse continued for years \
after the official closure. Sefa follows her inside and confesses the truth, that the ban is \
theater and the council quietly buys lenses still. Together they try a finished lens after \
dark and discover that the lights on the water are signals rising from under the bay rather \
than reflections.",
        ),
    },
    DemoChapter {
        key: "harbor-03",
        primary: "Tomas finds the two women in the cellar before dawn and is furious until he \
sees the lens they have mounted by the window. He tells them the true story of the Lantern Maid: \
the ship carried the last cargo of spiral glass, and it did not sink by storm but was pulled \
down by something that answered the light. Since that night the lighthouse has shone a coded \
pattern designed to say nothing is here, go deeper. The council knows, the fishermen suspect, \
and the boarded windows keep the town from answering the bay by accident. Mara realizes her \
mother's sketchbooks were not designs but translations. She resolves to learn the language of \
the signals, and Tomas, defeated, agrees to teach her the lighthouse code his sister invented.",
        control: Some(
            "Before sunrise Tomas discovers Mara and Sefa in the workshop, and his anger fades \
when he looks through their mounted lens. He explains what really happened to the Lantern \
Maid: no storm took her, something beneath the water rose to her lights and dragged her down \
with the final shipment of spiral glass aboard. Ever since, the lighthouse has flashed a \
pattern meant to discourage whatever listens below, and the town boards its seaward windows so \
no stray lamp replies to the bay. Mara understands at last that her mother's notebooks \
translate the signals, and Tomas agrees to teach her the code.",
        ),
    },
    DemoChapter {
        key: "harbor-04",
        primary: "Mara spends the winter learning the lighthouse code while Sefa ferries \
supplies and rumors between Vell and the outer islands. The signals from the bay grow more \
frequent, and they begin to repeat a single phrase that Mara's mother marked in her sketchbook \
with a circle of red ink: the harbor remembers. Tomas grows weaker as the fog thickens, and on \
the longest night he gives Mara the lighthouse logbook, four generations of keepers recording \
the same slow conversation with the deep. The book ends with an unfinished entry in her \
mother's hand, dated the morning she disappeared, promising to answer the bay one last time. \
Mara finally understands that her mother did not drown. She went down to the source of the \
signals willingly, carrying the brightest lens ever ground in Vell.",
        control: Some(
            "Through the cold months Mara studies the keeper's code as Sefa runs the ferry \
routes and gathers news. The undersea signals quicken and settle into one repeated sentence, \
the same phrase circled in red in her mother's sketchbook, the harbor remembers. As his health \
fails, Tomas passes her the lighthouse logbook, where four generations of keepers wrote down \
their slow exchange with the deep. Its final entry, unfinished and in her mother's \
handwriting, is dated the day she vanished and promises a last answer to the bay. Mara sees \
the truth now: her mother took the great lens and descended to the signals by choice.",
        ),
    },
    DemoChapter {
        key: "harbor-05",
        primary: "Spring opens the shipping lanes and strangers arrive in Vell asking about \
glass: agents of the mainland trade houses, led by a patient man named Corvin who carries a \
broken spiral lens in a velvet case. The council panics and orders the cellar sealed, but Sefa \
smuggles the finished lenses to the ferry before the masons arrive. Corvin corners Mara at the \
lighthouse and offers a partnership, mainland money to reopen the glassworks in exchange for \
the code. When she refuses, he reveals that the trade houses have been dredging the wreck of \
the Lantern Maid and have already raised part of her cargo. The chapter closes with the bay \
falling utterly silent for the first time in ten years, which every keeper's logbook agrees is \
the sign that something is about to surface.",
        control: Some(
            "With the thaw come outsiders, buyers from the mainland houses who ask too many \
questions about glass. Their leader Corvin shows Mara a shattered spiral lens and proposes a \
bargain: investment to restart the furnace, paid for with the lighthouse code. The council, \
frightened, walls up the cellar, though Sefa has already moved the lenses onto her ferry. When \
Mara turns Corvin down he admits his houses have dredged the Lantern Maid and recovered some \
of the sunken glass. That night the bay goes completely quiet, and the old logbooks are \
unanimous about what such silence means: a surfacing is near.",
        ),
    },
    DemoChapter {
        key: "harbor-06",
        primary: "On the night of the surfacing the whole town gathers behind boarded windows \
while Mara and Sefa carry the brightest lens to the end of the quay. The water peels back from \
the harbor mouth and the source of the signals rises, a tower of grown glass the size of the \
lighthouse, patterned with the same spiral as every lens ever made in Vell. Within its walls \
drift the lights of the Lantern Maid's crew, and at its heart stands a figure holding a lamp \
that Mara knows from childhood. Corvin's dredging barges open their floodlights and the tower \
turns toward them, but Mara answers first in her mother's code. The tower goes dark, the \
barges flee, and when the water settles a single pane of new glass lies on the quay, warm as a \
handprint, etched with two spirals instead of one.",
        control: Some(
            "When the surfacing comes, the townspeople hide indoors and Mara hauls the great \
lens down the quay with Sefa. The sea draws back and a glass tower climbs out of the harbor \
mouth, spiraled like the lenses, tall as the lighthouse, with the lost crew of the Lantern \
Maid glowing inside it and a familiar lamplit figure at its center. The mainland barges blaze \
their floodlights at it, and the tower begins to turn their way until Mara signals in the \
keeper's code she learned from her mother's hand. Darkness answers, the intruders run for open \
water, and the tide leaves behind one warm pane of fresh glass marked with a doubled spiral.",
        ),
    },
    DemoChapter {
        key: "harbor-too-short",
        primary: "A brief interlude describes the harbor in midwinter. Ice sheathes the \
mooring posts, the ferry stays in its slip, and the only light for a week of storms is the \
lighthouse beam sweeping the empty quay. Nothing moves in Vell but the fog.",
        control: Some(
            "A short passage paints the frozen harbor: iced bollards, an idle ferry, storm \
after storm, and the lighthouse alone keeping watch over a deserted waterfront.",
        ),
    },
    DemoChapter {
        key: "harbor-unpaired",
        primary: "An appendix chapter reprints the founding charter of the Vell glassworks \
and the roll of master blowers from its first century. The charter grants the guild exclusive \
right to fire spiral glass within sight of the harbor and binds every master to keep one \
finished lens in trust for the lighthouse. The roll records forty-one masters, ending with \
Tomas and, in a later hand, the name of Mara's mother with no date of mastery and no date of \
death, only the guild mark repeated twice. Historians of the trade note that no other guild \
charter on the coast mentions a lighthouse at all, and that the Vell roll is the only one \
where a name was entered after the works were officially closed, a detail the town has never \
explained to anyone who asked about it.",
        control: None,
    },
];

/// The two mock models behind the demo fixtures. The "omega" model is newer
/// and substitutes fewer words, so its paraphrase groups come out more
/// similar and the cross-release trend in the demo points upward.
pub fn demo_models() -> Vec<ModelSpec> {
    vec![
        ModelSpec {
            id: "mock-alpha".into(),
            api_name: "mock-alpha".into(),
            knowledge_cutoff: "2023-03-01".into(),
            release_date: "2030-01-01".into(),
            supports_temperature_zero: true,
            release_order: 100,
        },
        ModelSpec {
            id: "mock-omega".into(),
            api_name: "mock-omega".into(),
            knowledge_cutoff: "2025-03-01".into(),
            release_date: "2030-06-01".into(),
            supports_temperature_zero: true,
            release_order: 101,
        },
    ]
}

pub const DEMO_ROUNDS_T0: usize = 3;
pub const DEMO_ROUNDS_T1: usize = 5;

const SUBSTITUTES: &[&str] = &[
    "meanwhile", "quietly", "suddenly", "carefully", "eventually", "certainly", "perhaps",
    "altogether", "somewhere", "yesterday", "tomorrow", "elsewhere", "inevitably", "reportedly",
    "curiously", "plainly", "briskly", "warily", "gravely", "softly", "sharply", "steadily",
    "narrowly", "broadly", "anew", "again", "twice", "thrice", "inward", "outward", "seaward",
    "landward",
];

fn hash_str(seed: u64, s: &str) -> u64 {
    let mut state = seed;
    for &b in s.as_bytes() {
        state = SplitMix64::new(state ^ b as u64).next_u64();
    }
    state
}

/// Per-(model, temperature) substitution rates.
fn rates(model_id: &str, temperature: Temperature) -> (f64, f64) {
    // (shared-rate across rounds, per-round rate)
    match (model_id, temperature) {
        ("mock-omega", Temperature::Zero) => (0.05, 0.02),
        ("mock-omega", Temperature::One) => (0.0, 0.10),
        (_, Temperature::Zero) => (0.10, 0.05),
        (_, Temperature::One) => (0.0, 0.22),
    }
}

/// Deterministic mock paraphrase: word-level substitutions at rates chosen
/// per model and temperature. Temperature-0 rounds share most of their
/// substitutions (near-deterministic output); temperature-1 substitutions are
/// independent per round.
pub fn mock_paraphrase(
    original: &str,
    model_id: &str,
    temperature: Temperature,
    round: usize,
) -> String {
    let (shared_rate, round_rate) = rates(model_id, temperature);
    let model_seed = hash_str(0x5eed, model_id) ^ (u8::from(temperature) as u64) << 32;
    let words: Vec<&str> = original.split_whitespace().collect();
    let mut out = Vec::with_capacity(words.len());
    for (i, word) in words.iter().enumerate() {
        let shared_draw =
            SplitMix64::new(model_seed ^ (i as u64) << 8 ^ hash_str(7, word)).next_f64();
        let round_draw = SplitMix64::new(
            model_seed ^ (i as u64) << 8 ^ (round as u64) << 40 ^ hash_str(11, word),
        )
        .next_f64();
        if shared_draw < shared_rate {
            // Same replacement in every round of this (model, temperature).
            let pick = SplitMix64::new(model_seed ^ (i as u64) << 16).next_below(
                SUBSTITUTES.len() as u64,
            );
            out.push(SUBSTITUTES[pick as usize]);
        } else if round_draw < round_rate {
            let pick = SplitMix64::new(model_seed ^ (i as u64) << 16 ^ (round as u64) << 48)
                .next_below(SUBSTITUTES.len() as u64);
            out.push(SUBSTITUTES[pick as usize]);
        } else {
            out.push(word);
        }
    }
    out.join(" ")
}

/// Paths of a generated demo tree.
#[derive(Debug, Clone)]
pub struct DemoTree {
    pub root: PathBuf,
    pub dataset_index: PathBuf,
    pub fixtures_dir: PathBuf,
    pub config_path: PathBuf,
}

fn write(path: &Path, contents: &str) -> Result<(), CorpusError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|source| CorpusError::StoreUnwritable {
            path: parent.to_path_buf(),
            source,
        })?;
    }
    std::fs::write(path, contents).map_err(|source| CorpusError::StoreUnwritable {
        path: path.to_path_buf(),
        source,
    })
}

/// Write the complete demo tree: dataset, response fixtures for every
/// (model, temperature, round, chapter), and a ready-to-run config file.
/// Byte-deterministic.
pub fn write_demo_tree(root: &Path) -> Result<DemoTree, CorpusError> {
    let dataset_dir = root.join("dataset");
    let fixtures_dir = root.join("fixtures");

    let mut index = String::new();
    for chapter in CHAPTERS {
        let primary_rel = format!("texts/{}.primary.txt", chapter.key);
        write(&dataset_dir.join(&primary_rel), chapter.primary)?;
        let control_rel = match chapter.control {
            Some(control) => {
                let rel = format!("texts/{}.control.txt", chapter.key);
                write(&dataset_dir.join(&rel), control)?;
                rel
            }
            None => String::new(),
        };
        index.push_str(&format!("{}\t{}\t{}\n", chapter.key, primary_rel, control_rel));
    }
    let dataset_index = dataset_dir.join("index.tsv");
    write(&dataset_index, &index)?;

    std::fs::create_dir_all(&fixtures_dir).map_err(|source| CorpusError::StoreUnwritable {
        path: fixtures_dir.clone(),
        source,
    })?;
    for model in demo_models() {
        for temperature in Temperature::ALL {
            let rounds = match temperature {
                Temperature::Zero => DEMO_ROUNDS_T0,
                Temperature::One => DEMO_ROUNDS_T1,
            };
            for round in 1..=rounds {
                for chapter in CHAPTERS {
                    let text = mock_paraphrase(chapter.primary, &model.id, temperature, round);
                    let body = json!({
                        "choices": [{"message": {"role": "assistant", "content": text}}]
                    })
                    .to_string();
                    let request = crate::client::ChatRequest {
                        model_id: model.id.clone(),
                        api_name: model.api_name.clone(),
                        temperature,
                        send_temperature: true,
                        reasoning_none: false,
                        prompt: String::new(),
                        chapter: chapter.key.to_string(),
                        round,
                    };
                    write(
                        &request.fixture_file(&fixtures_dir),
                        &body,
                    )?;
                }
            }
        }
    }

    let mut config = KvDocument::new();
    config.set("paths", "dataset", "dataset/index.tsv");
    config.set("paths", "store", "records");
    config.set("paths", "fixtures", "fixtures");
    config.set("paths", "out", "reports");
    config.set("run", "models", "mock-alpha,mock-omega");
    config.set("run", "temps", "0,1");
    config.set("run", "rounds-t0", DEMO_ROUNDS_T0.to_string());
    config.set("run", "rounds-t1", DEMO_ROUNDS_T1.to_string());
    config.set("run", "mode", "replay");
    config.set("run", "gap-seconds", "30");
    config.set("sweep", "l-min", "3");
    config.set("sweep", "l-max", "20");
    for model in demo_models() {
        let section = format!("model {}", model.id);
        config.set(&section, "api-name", model.api_name.clone());
        config.set(&section, "knowledge-cutoff", model.knowledge_cutoff.clone());
        config.set(&section, "release-date", model.release_date.clone());
        config.set(
            &section,
            "supports-temperature-0",
            model.supports_temperature_zero.to_string(),
        );
        config.set(&section, "release-order", model.release_order.to_string());
    }
    let config_path = root.join("run.conf");
    write(&config_path, &config.render())?;

    Ok(DemoTree {
        root: root.to_path_buf(),
        dataset_index,
        fixtures_dir,
        config_path,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{ingest_paired_corpus, LengthFilter};
    use crate::text::TokenizationPolicy;

    #[test]
    fn demo_dataset_admits_six_chapters() {
        let dir = tempfile::tempdir().unwrap();
        let tree = write_demo_tree(dir.path()).unwrap();
        let report = ingest_paired_corpus(
            &tree.dataset_index,
            TokenizationPolicy::default(),
            LengthFilter::default(),
        )
        .unwrap();
        assert_eq!(report.pairs.len(), 6);
        assert_eq!(report.rejected.len(), 2);
        for pair in &report.pairs {
            assert!(pair.primary_words >= 100, "{} too short", pair.chapter);
            assert!(pair.primary_words <= 2000);
        }
    }

    #[test]
    fn demo_tree_is_byte_deterministic() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        write_demo_tree(a.path()).unwrap();
        write_demo_tree(b.path()).unwrap();

        let mut paths_a: Vec<PathBuf> = walk(a.path());
        let mut paths_b: Vec<PathBuf> = walk(b.path());
        paths_a.sort();
        paths_b.sort();
        let rel = |root: &Path, paths: &[PathBuf]| -> Vec<PathBuf> {
            paths
                .iter()
                .map(|p| p.strip_prefix(root).unwrap().to_path_buf())
                .collect()
        };
        assert_eq!(rel(a.path(), &paths_a), rel(b.path(), &paths_b));
        for (pa, pb) in paths_a.iter().zip(&paths_b) {
            assert_eq!(
                std::fs::read(pa).unwrap(),
                std::fs::read(pb).unwrap(),
                "{pa:?} differs"
            );
        }
    }

    fn walk(root: &Path) -> Vec<PathBuf> {
        let mut files = Vec::new();
        let mut stack = vec![root.to_path_buf()];
        while let Some(dir) = stack.pop() {
            for entry in std::fs::read_dir(&dir).unwrap() {
                let path = entry.unwrap().path();
                if path.is_dir() {
                    stack.push(path);
                } else {
                    files.push(path);
                }
            }
        }
        files
    }

    #[test]
    fn temperature_zero_rounds_are_nearly_identical() {
        let original = CHAPTERS[0].primary;
        let r1 = mock_paraphrase(original, "mock-alpha", Temperature::Zero, 1);
        let r2 = mock_paraphrase(original, "mock-alpha", Temperature::Zero, 2);
        let same = r1
            .split_whitespace()
            .zip(r2.split_whitespace())
            .filter(|(a, b)| a == b)
            .count();
        let total = r1.split_whitespace().count();
        assert!(same as f64 / total as f64 > 0.85, "{same}/{total}");

        let t1_r1 = mock_paraphrase(original, "mock-alpha", Temperature::One, 1);
        let t1_r2 = mock_paraphrase(original, "mock-alpha", Temperature::One, 2);
        let same_t1 = t1_r1
            .split_whitespace()
            .zip(t1_r2.split_whitespace())
            .filter(|(a, b)| a == b)
            .count();
        assert!(same_t1 < same, "t1 rounds should differ more than t0 rounds");
    }

    #[test]
    fn newer_mock_model_repeats_itself_more() {
        let original = CHAPTERS[1].primary;
        let agreement = |model: &str| {
            let r1 = mock_paraphrase(original, model, Temperature::One, 1);
            let r2 = mock_paraphrase(original, model, Temperature::One, 2);
            r1.split_whitespace()
                .zip(r2.split_whitespace())
                .filter(|(a, b)| a == b)
                .count()
        };
        assert!(agreement("mock-omega") > agreement("mock-alpha"));
    }
}
