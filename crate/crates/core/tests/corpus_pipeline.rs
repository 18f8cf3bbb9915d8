//! Ingestion against frozen fixtures plus corpus-level properties.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use chaptering::corpus::{
    align_chapters, build_titles_view, concentration_index, corpus_stats, gen_synthetic, ingest_dir, make_splits,
    repair_cues, sanity_check, split_sentences, write_jsonl, CaptionCue, ChapterMark, Partition, RuleTokenizer,
    Sentence, SentenceTokenizer, SplitAssignment, SynthConfig,
};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/ingest")
}

#[test]
fn golden_ingest_is_byte_identical() {
    let out = ingest_dir(&fixtures().join("vtt"), &fixtures().join("chapters"), &RuleTokenizer::default()).unwrap();
    let mut buf = Vec::new();
    write_jsonl(&mut buf, &out.documents).unwrap();
    let want = std::fs::read(fixtures().join("expected.jsonl")).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap(), String::from_utf8(want).unwrap());

    let report = serde_json::to_string(&out.report()).unwrap() + "\n";
    assert_eq!(report, std::fs::read_to_string(fixtures().join("expected_report.json")).unwrap());
    let ids: Vec<&str> = out.excluded.iter().map(|(id, _)| id.as_str()).collect();
    assert_eq!(ids, vec!["bad", "c", "d", "e"]);
    assert!((out.exclusion_rate() - 4.0 / 6.0).abs() < 1e-12);
}

#[test]
fn golden_stats_of_fixture_corpus() {
    let out = ingest_dir(&fixtures().join("vtt"), &fixtures().join("chapters"), &RuleTokenizer::default()).unwrap();
    let s = corpus_stats(&out.documents).unwrap();
    // doc lengths 4 and 3; segments of 2,2 and 1,2 sentences; titles of
    // 1, 2, 1, 1 words, all distinct
    assert_eq!((s.document_sentences.mean, s.document_sentences.sd), (3.5, 0.5));
    assert_eq!((s.segments_per_document.mean, s.segments_per_document.sd), (2.0, 0.0));
    assert_eq!(s.segment_sentences.mean, 1.75);
    assert!((s.segment_sentences.sd - 0.1875f64.sqrt()).abs() < 1e-12);
    assert_eq!(s.title_words.mean, 1.25);
    assert!((s.title_words.sd - 0.1875f64.sqrt()).abs() < 1e-12);
    let mins = [6.5, 10.0 - (3.5 + 4.5 * 29.0 / 42.0), 2.0 * 12.0 / 26.0, 3.0].map(|x| x / 60.0);
    let mean = mins.iter().sum::<f64>() / 4.0;
    assert!((s.segment_minutes.mean - mean).abs() < 1e-12);
    assert_eq!(s.concentration_index, 1.0);

    let view = build_titles_view(&out.documents, &SplitAssignment::new());
    assert_eq!(view.len(), 4);
    assert_eq!(view[1].previous_titles, vec!["Welcome".to_string()]);
    assert_eq!(view[1].section_text, "It is simple. Let us begin!");
}

/// Reference greedy assignment written out longhand.
fn greedy_reference(docs: &[(String, String)], ratios: [f64; 3], seed: u64) -> BTreeMap<String, usize> {
    let mut channels: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for (id, ch) in docs {
        channels.entry(ch.clone()).or_default().push(id.clone());
    }
    let mut groups: Vec<Vec<String>> = Vec::new();
    let mut pooled = Vec::new();
    for (_, ids) in channels {
        if ids.len() > 1 {
            groups.push(ids);
        } else {
            pooled.extend(ids);
        }
    }
    if !pooled.is_empty() {
        groups.push(pooled);
    }
    groups.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
    let n = docs.len() as f64;
    let mut counts = [0.0f64; 3];
    let mut out = BTreeMap::new();
    for g in groups {
        let deficits: Vec<f64> = (0..3).map(|p| ratios[p] * n - counts[p]).collect();
        let mut p = 0;
        for q in 1..3 {
            if deficits[q] > deficits[p] {
                p = q;
            }
        }
        counts[p] += g.len() as f64;
        for id in g {
            out.insert(id, p);
        }
    }
    out
}

#[test]
fn forty_channel_split() {
    let docs: Vec<(String, String)> = (0..40)
        .flat_map(|c| (0..10).map(move |d| (format!("v{c:02}-{d}"), format!("ch{c:02}"))))
        .collect();
    let ratios = [0.85, 0.075, 0.075];
    let s = make_splits(&docs, ratios, 7).unwrap();
    assert_eq!(s, make_splits(&docs, ratios, 7).unwrap());
    let reference = greedy_reference(&docs, ratios, 7);
    for (id, p) in &s {
        assert_eq!(Partition::ALL[reference[id]], *p);
    }
    let mut per_channel: BTreeMap<&str, BTreeSet<Partition>> = BTreeMap::new();
    for (id, ch) in &docs {
        per_channel.entry(ch).or_default().insert(s[id]);
    }
    assert!(per_channel.values().all(|ps| ps.len() == 1));
    for (k, p) in Partition::ALL.iter().enumerate() {
        let got = s.values().filter(|x| *x == p).count() as f64;
        assert!((got - ratios[k] * 400.0).abs() <= 10.0, "{p:?}: {got}");
    }
}

#[test]
fn synthetic_segment_length_mean() {
    let cfg = SynthConfig { documents: 1000, ..Default::default() };
    let docs = gen_synthetic(&cfg, 11).unwrap();
    let lens: Vec<usize> = docs.iter().flat_map(|d| d.segments().into_iter().map(|r| r.len())).collect();
    let mean = lens.iter().sum::<usize>() as f64 / lens.len() as f64;
    assert!((mean - 7.0).abs() < 0.2, "{mean}");
    assert!(lens.iter().all(|&l| (3..=11).contains(&l)));
}

#[test]
fn concentration_is_monotone_in_n() {
    let titles = ["a", "b", "a", "c", "d", "a", "b"];
    let mut prev = 0.0;
    for n in 1..6 {
        let ci = concentration_index(titles, n).unwrap();
        assert!(ci >= prev);
        prev = ci;
    }
    assert_eq!(prev, 1.0);
}

fn word() -> impl Strategy<Value = String> {
    prop_oneof![
        "[a-z]{1,6}",
        "[A-Z][a-z]{0,5}\\.",
        "[a-z]{1,5}[!?]",
        Just("Dr.".to_string()),
        Just("\"Quote\"".to_string()),
    ]
}

fn cues() -> impl Strategy<Value = Vec<CaptionCue>> {
    proptest::collection::vec((proptest::collection::vec(word(), 1..6), 1u32..50, 0u32..3), 1..10).prop_map(|raw| {
        let mut t = 0.0;
        raw.into_iter()
            .map(|(words, dur, gap)| {
                let start = t + gap as f64;
                let end = start + dur as f64 / 10.0;
                t = end;
                CaptionCue::new(start, end, words.join(" ") + ".")
            })
            .collect()
    })
}

proptest! {
    #[test]
    fn sentences_conserve_characters_and_time(cs in cues()) {
        let tok = RuleTokenizer::default();
        let ss = split_sentences(&cs, &tok).unwrap();
        let joined: Vec<String> = cs.iter().map(|c| c.text.clone()).collect();
        let strip = |s: &str| s.chars().filter(|c| !c.is_whitespace()).collect::<String>();
        let got: String = ss.iter().map(|s| strip(&s.text)).collect();
        prop_assert_eq!(got, strip(&joined.join(" ")));
        for s in &ss {
            prop_assert!(s.end >= s.start);
            prop_assert!(s.start >= cs[0].start && s.end <= cs.last().unwrap().end);
        }
        for w in ss.windows(2) {
            prop_assert!(w[1].start >= w[0].end - 1e-12);
        }
    }

    #[test]
    fn alignment_labels_partition_chapters(
        lens in proptest::collection::vec(1u32..20, 1..15),
        starts in proptest::collection::vec(0u32..200, 1..6),
    ) {
        let mut t = 0.0;
        let sentences: Vec<Sentence> = lens.iter().map(|&l| {
            let s = Sentence { text: "x.".into(), start: t, end: t + l as f64 };
            t += l as f64;
            s
        }).collect();
        let mut st = starts.clone();
        st.sort_unstable();
        st.dedup();
        let marks: Vec<ChapterMark> = st.iter().map(|&s| ChapterMark::new(format!("c{s}"), s as f64)).collect();
        let d = align_chapters("v", "c", sentences, &marks).unwrap();
        prop_assert_eq!(sanity_check(&d), Ok(()));
        prop_assert_eq!(d.segments().len(), d.chapters.len());
        prop_assert!(d.chapters.windows(2).all(|w| w[0].end == w[1].start && w[0].start <= w[1].start));
    }

    #[test]
    fn repair_output_is_sorted_and_disjoint(raw in proptest::collection::vec((0u32..100, 0u32..20), 0..12)) {
        let mut cs: Vec<CaptionCue> = raw.iter().map(|&(s, d)| CaptionCue::new(s as f64, (s + d) as f64, "x")).collect();
        cs.sort_by(|a, b| a.start.total_cmp(&b.start));
        if cs.len() >= 2 {
            cs.swap(0, 1);
        }
        if let Ok(out) = repair_cues(cs) {
            for w in out.windows(2) {
                prop_assert!(w[0].end <= w[1].start);
            }
            prop_assert!(out.iter().all(|c| c.end > c.start));
        }
    }

    #[test]
    fn splits_are_channel_disjoint(sizes in proptest::collection::vec(1usize..6, 3..25), seed in 0u64..1000) {
        let docs: Vec<(String, String)> = sizes.iter().enumerate()
            .flat_map(|(c, &n)| (0..n).map(move |d| (format!("v{c}-{d}"), format!("ch{c}"))))
            .collect();
        let s = make_splits(&docs, [0.8, 0.1, 0.1], seed).unwrap();
        prop_assert_eq!(s.len(), docs.len());
        let mut seen: BTreeMap<&str, Partition> = BTreeMap::new();
        for (id, ch) in &docs {
            let p = s[id];
            prop_assert_eq!(*seen.entry(ch).or_insert(p), p);
        }
        let reference = greedy_reference(&docs, [0.8, 0.1, 0.1], seed);
        for (id, p) in &s {
            prop_assert_eq!(Partition::ALL[reference[id]], *p);
        }
    }
}

#[test]
fn tokenizer_trait_is_pluggable() {
    struct Lines;
    impl SentenceTokenizer for Lines {
        fn spans(&self, text: &str) -> Vec<(usize, usize)> {
            vec![(0, text.chars().count())]
        }
    }
    let ss = split_sentences(&[CaptionCue::new(0.0, 1.0, "One. Two.")], &Lines).unwrap();
    assert_eq!(ss.len(), 1);
}
