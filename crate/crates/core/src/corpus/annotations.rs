use std::fmt::Write as _;
use std::path::Path;

use super::{Tier, UnitSegment, PAUSE_LABELS};
use crate::error::{Error, Result};

/// Parse a tab-separated annotation file and return the units of `tier`.
///
/// Lines are `start<TAB>end<TAB>tier<TAB>label`; `#` lines and blank lines are
/// skipped, as are lines of other tiers and pause labels. The recording id is
/// the file stem.
pub fn parse_annotations(path: impl AsRef<Path>, tier: Tier) -> Result<Vec<UnitSegment>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_annotation_str(&text, tier, &id, path)
}

/// Parse annotation text already in memory. `source` is used in error messages only.
pub fn parse_annotation_str(
    text: &str,
    tier: Tier,
    recording_id: &str,
    source: &Path,
) -> Result<Vec<UnitSegment>> {
    let malformed = |line: usize, reason: String| Error::MalformedAnnotation {
        path: source.to_path_buf(),
        line,
        reason,
    };

    let mut units = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < 3 || fields.len() > 4 {
            return Err(malformed(lineno, format!("expected 3 or 4 tab-separated fields, got {}", fields.len())));
        }
        let start: f64 = fields[0]
            .trim()
            .parse()
            .map_err(|_| malformed(lineno, format!("bad start time {:?}", fields[0])))?;
        let end: f64 = fields[1]
            .trim()
            .parse()
            .map_err(|_| malformed(lineno, format!("bad end time {:?}", fields[1])))?;
        if !start.is_finite() || !end.is_finite() || start < 0.0 {
            return Err(malformed(lineno, "times must be finite and non-negative".into()));
        }
        if end <= start {
            return Err(malformed(lineno, format!("end {end} <= start {start}")));
        }
        // other tiers (sentence, phrase, ...) may share the file
        let Ok(line_tier) = fields[2].parse::<Tier>() else {
            continue;
        };
        if line_tier != tier {
            continue;
        }
        let label = fields.get(3).map(|s| s.trim()).unwrap_or("");
        if PAUSE_LABELS.contains(&label) {
            continue;
        }
        units.push(UnitSegment {
            start,
            end,
            tier,
            text: Some(label.to_string()),
            recording_id: recording_id.to_string(),
        });
    }

    units.sort_by(|a, b| a.start.total_cmp(&b.start));
    for pair in units.windows(2) {
        if pair[1].start < pair[0].end {
            return Err(Error::OverlappingUnits {
                path: source.to_path_buf(),
                first_start: pair[0].start,
                first_end: pair[0].end,
                second_start: pair[1].start,
                second_end: pair[1].end,
            });
        }
    }
    Ok(units)
}

/// Serialize units in the annotation format. Parsing the output gives back the same list.
pub fn format_annotations(units: &[UnitSegment]) -> String {
    let mut out = String::new();
    for u in units {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}",
            u.start,
            u.end,
            u.tier,
            u.text.as_deref().unwrap_or("")
        );
    }
    out
}

pub fn write_annotations(path: impl AsRef<Path>, units: &[UnitSegment]) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, format_annotations(units)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn parse(text: &str, tier: Tier) -> Result<Vec<UnitSegment>> {
        parse_annotation_str(text, tier, "rec", Path::new("test.tsv"))
    }

    #[test]
    fn empty_file_gives_no_units() {
        assert!(parse("", Tier::Word).unwrap().is_empty());
        assert!(parse("# only a comment\n\n", Tier::Word).unwrap().is_empty());
    }

    #[test]
    fn two_words_in_order() {
        let units = parse("0.0\t0.5\tword\tdat\n0.5\t0.9\tword\tlea\n", Tier::Word).unwrap();
        assert_eq!(units.len(), 2);
        assert_eq!(units[0].text.as_deref(), Some("dat"));
        assert_eq!(units[1].text.as_deref(), Some("lea"));
        assert_eq!((units[1].start, units[1].end), (0.5, 0.9));
    }

    #[test]
    fn overlap_is_an_error() {
        let err = parse("0.0\t0.6\tword\ta\n0.5\t0.9\tword\tb\n", Tier::Word).unwrap_err();
        assert!(matches!(err, Error::OverlappingUnits { .. }));
    }

    #[test]
    fn reversed_times_and_garbage_are_errors() {
        assert!(matches!(
            parse("0.5\t0.5\tword\ta\n", Tier::Word),
            Err(Error::MalformedAnnotation { line: 1, .. })
        ));
        assert!(matches!(
            parse("# c\nx\t0.5\tword\ta\n", Tier::Word),
            Err(Error::MalformedAnnotation { line: 2, .. })
        ));
        assert!(matches!(
            parse("0.1 0.5 word a\n", Tier::Word),
            Err(Error::MalformedAnnotation { .. })
        ));
    }

    #[test]
    fn pauses_and_other_tiers_are_filtered() {
        let text = "0.0\t0.2\tword\t<p>\n0.2\t0.4\tword\tsil\n0.4\t0.6\tword\n0.6\t0.9\tword\tgo\n\
                    0.0\t0.9\tsentence\tgo\n0.6\t0.7\tsyllable\tg\n";
        let words = parse(text, Tier::Word).unwrap();
        assert_eq!(words.len(), 1);
        assert_eq!(words[0].text.as_deref(), Some("go"));
        let syl = parse(text, Tier::Syllable).unwrap();
        assert_eq!(syl.len(), 1);
    }

    #[test]
    fn unsorted_input_is_ordered() {
        let units = parse("0.5\t0.9\tword\tb\n0.0\t0.5\tword\ta\n", Tier::Word).unwrap();
        assert_eq!(units[0].text.as_deref(), Some("a"));
    }

    proptest! {
        #[test]
        fn parse_format_is_idempotent(gaps in proptest::collection::vec((0.0f64..1.0, 0.001f64..2.0), 0..30)) {
            let mut t = 0.0;
            let mut units = Vec::new();
            for (i, (gap, len)) in gaps.iter().enumerate() {
                t += gap;
                units.push(UnitSegment {
                    start: t,
                    end: t + len,
                    tier: Tier::Word,
                    text: Some(format!("w{i}")),
                    recording_id: "rec".into(),
                });
                t += len;
            }
            let parsed = parse(&format_annotations(&units), Tier::Word).unwrap();
            prop_assert_eq!(&parsed, &units);
            let again = parse(&format_annotations(&parsed), Tier::Word).unwrap();
            prop_assert_eq!(again, parsed);
        }
    }
}
