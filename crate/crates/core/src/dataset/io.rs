//! JSON-lines persistence: one header line, then one trajectory per line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ExtensiveTrajectory, GameDataset, Provenance};
use crate::error::{Error, Result};
use crate::game::make_game;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format: u32,
    game: String,
    #[serde(default)]
    params: serde_json::Value,
    #[serde(default)]
    provenance: Provenance,
    trajectories: usize,
}

pub fn save_to_writer(d: &GameDataset, w: impl Write) -> Result<()> {
    let mut w = BufWriter::new(w);
    let header = Header {
        format: FORMAT_VERSION,
        game: d.game.name().to_string(),
        params: d.game.params_json(),
        provenance: d.provenance.clone(),
        trajectories: d.len(),
    };
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    for t in &d.trajectories {
        serde_json::to_writer(&mut w, t)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn save(d: &GameDataset, path: impl AsRef<Path>) -> Result<()> {
    save_to_writer(d, File::create(path)?)
}

/// Reads and validates a dataset. With `expected_game`, a dataset recorded
/// for another game is rejected.
pub fn load_from_reader(r: impl Read, expected_game: Option<&str>) -> Result<GameDataset> {
    let mut lines = BufReader::new(r).lines();
    let parse = |line: usize, msg: String| Error::Parse { line, msg };
    let first = lines.next().ok_or_else(|| parse(1, "empty file".into()))??;
    let header: Header = serde_json::from_str(&first).map_err(|e| parse(1, format!("bad header: {e}")))?;
    if header.format != FORMAT_VERSION {
        return Err(parse(1, format!("unsupported format version {}", header.format)));
    }
    if let Some(expected) = expected_game {
        if expected != header.game {
            return Err(Error::GameMismatch { expected: expected.into(), found: header.game });
        }
    }
    let game = make_game(&header.game, &header.params)?;
    let mut trajectories = Vec::with_capacity(header.trajectories);
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let t: ExtensiveTrajectory = serde_json::from_str(&line).map_err(|e| parse(i + 2, e.to_string()))?;
        trajectories.push(t);
    }
    if trajectories.len() != header.trajectories {
        return Err(parse(
            trajectories.len() + 2,
            format!("header declares {} trajectories, file has {}", header.trajectories, trajectories.len()),
        ));
    }
    let d = GameDataset { game, trajectories, provenance: header.provenance };
    d.validate()?;
    Ok(d)
}

pub fn load(path: impl AsRef<Path>, expected_game: Option<&str>) -> Result<GameDataset> {
    load_from_reader(File::open(path)?, expected_game)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{make_rps_d1_exact, sample_dataset};
    use crate::game::{GameSpec, OshiZumoParams};
    use crate::policy::{behavior_profile, uniform_profile};
    use crate::tree::GameTree;

    fn to_string(d: &GameDataset) -> String {
        let mut buf = Vec::new();
        save_to_writer(d, &mut buf).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn round_trip() {
        let d = make_rps_d1_exact().unwrap();
        let text = to_string(&d);
        let back = load_from_reader(text.as_bytes(), Some("rps")).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn round_trip_with_params() {
        let spec = GameSpec::OshiZumo(OshiZumoParams { coins: 3, size: 2, horizon: 4 });
        let tree = GameTree::build(&spec).unwrap();
        let d = sample_dataset(&spec, &behavior_profile(&tree, &uniform_profile(&tree)), 20, 5).unwrap();
        let back = load_from_reader(to_string(&d).as_bytes(), None).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn game_mismatch() {
        let text = to_string(&make_rps_d1_exact().unwrap());
        let err = load_from_reader(text.as_bytes(), Some("kuhn")).unwrap_err();
        assert!(matches!(err, Error::GameMismatch { .. }));
    }

    #[test]
    fn truncated_line_reports_line_number() {
        let text = to_string(&make_rps_d1_exact().unwrap());
        let cut = &text[..text.len() - 10];
        match load_from_reader(cut.as_bytes(), None).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 1001),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn missing_lines_detected() {
        let text = to_string(&make_rps_d1_exact().unwrap());
        let short: String = text.lines().take(10).map(|l| format!("{l}\n")).collect();
        assert!(matches!(load_from_reader(short.as_bytes(), None), Err(Error::Parse { .. })));
    }

    #[test]
    fn empty_and_bad_header() {
        assert!(matches!(load_from_reader(&b""[..], None), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(load_from_reader(&b"{\"format\":9}\n"[..], None), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn tampered_returns_rejected() {
        let text = to_string(&make_rps_d1_exact().unwrap());
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        let mut t: serde_json::Value = serde_json::from_str(&lines[1]).unwrap();
        t["returns"] = serde_json::json!([1.0, -1.0]);
        lines[1] = t.to_string();
        let joined = lines.join("\n");
        assert!(matches!(load_from_reader(joined.as_bytes(), None), Err(Error::InvalidTrajectory { index: 0, .. })));
    }
}
