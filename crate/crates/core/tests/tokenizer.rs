mod common;

use common::rng;
use erasmo::codec::{encode_text, read_csv, Variant};
use erasmo::tokenizer::{detokenize, tokenize, train_bpe, TokenSequence, TokenizerError, Vocabulary};
use proptest::prelude::*;
use rand::Rng;

fn records() -> Vec<String> {
    let mut csv = String::from("age,job,balance,married\n");
    let mut r = rng(2);
    let jobs = ["admin.", "technician", "blue-collar", "management", "retired"];
    for _ in 0..100 {
        csv += &format!(
            "{},{},{:.2},{}\n",
            r.random_range(18..90),
            jobs[r.random_range(0..jobs.len())],
            r.random_range(-500.0..9000.0),
            if r.random_bool(0.5) { "yes" } else { "no" }
        );
    }
    let ds = read_csv(csv.as_bytes(), &[]).unwrap();
    let mut out = Vec::new();
    for variant in [Variant::Base, Variant::Nv] {
        for i in 0..ds.n_rows() {
            out.push(encode_text(&ds, i, 7, variant).unwrap());
        }
    }
    out
}

fn vocab() -> Vocabulary {
    train_bpe(&records(), 600).unwrap()
}

/// Strings mixing ASCII, multi-byte scripts, emoji and whitespace.
fn random_string(r: &mut impl Rng) -> String {
    const POOL: &[char] = &[
        'a', 'z', ' ', ' ', ',', '.', '0', '9', 'é', 'ß', 'ж', '中', '日', '🙂', '🚀', '\n', '\t', '\u{0}',
    ];
    let len = r.random_range(0..40);
    (0..len)
        .map(|_| {
            if r.random_bool(0.2) {
                char::from_u32(r.random_range(0..0x11_0000)).unwrap_or('x')
            } else {
                POOL[r.random_range(0..POOL.len())]
            }
        })
        .collect()
}

#[test]
fn round_trips_random_strings_and_corpus() {
    let v = vocab();
    let mut r = rng(3);
    for _ in 0..10_000 {
        let s = random_string(&mut r);
        assert_eq!(detokenize(&v, &tokenize(&v, &s)).unwrap(), s);
    }
    for line in records() {
        let seq = tokenize(&v, &line);
        assert!(seq.len() < line.len() + 2, "merges should compress the corpus");
        assert_eq!(detokenize(&v, &seq).unwrap(), line);
    }
}

#[test]
fn training_is_deterministic() {
    let a = vocab().to_json();
    let b = vocab().to_json();
    assert_eq!(a.as_bytes(), b.as_bytes());
    assert_eq!(Vocabulary::from_json(&a).unwrap().to_json(), a);
}

#[test]
fn vocabulary_invariants() {
    let v = vocab();
    assert_eq!(v.len(), 600);
    for b in 0..=255u32 {
        assert_eq!(v.token_bytes(b), Some(&[b as u8][..]));
    }
    for (rank, &(a, b)) in v.merges().iter().enumerate() {
        let id = (Vocabulary::min_size() + rank) as u32;
        assert!(a < id && b < id);
        let mut joined = v.token_bytes(a).unwrap().to_vec();
        joined.extend_from_slice(v.token_bytes(b).unwrap());
        assert_eq!(v.token_bytes(id).unwrap(), joined);
    }
}

#[test]
fn small_budgets_and_edges() {
    let v = train_bpe(&["aaaa".into()], 259).unwrap();
    assert!(v.merges().is_empty());
    let v = train_bpe(&["aaaa".into()], 260).unwrap();
    assert_eq!(v.merges(), &[(97, 97)]);
    let sp = v.specials();
    assert_eq!(tokenize(&v, "").ids, vec![sp.bos, sp.eos]);
    assert_eq!(
        detokenize(
            &v,
            &TokenSequence {
                ids: vec![sp.bos, sp.eos]
            }
        )
        .unwrap(),
        ""
    );
    assert_eq!(detokenize(&v, &TokenSequence { ids: vec![97] }).unwrap(), "a");
    assert!(matches!(
        detokenize(
            &v,
            &TokenSequence {
                ids: vec![v.len() as u32]
            }
        ),
        Err(TokenizerError::InvalidId { .. })
    ));
    let emoji = tokenize(&v, "🙂");
    assert_eq!(emoji.ids[1..5], [0xF0, 0x9F, 0x99, 0x82]);
    assert!(matches!(train_bpe(&[], 300), Err(TokenizerError::EmptyCorpus)));
    assert!(matches!(
        train_bpe(&["a".into()], 100),
        Err(TokenizerError::VocabTooSmall { .. })
    ));
}

#[test]
fn merging_stops_when_no_pair_repeats() {
    let v = train_bpe(&["abcdef".into()], 1000).unwrap();
    assert!(v.merges().is_empty());
}

proptest! {
    #[test]
    fn tokenize_is_total_and_lossless(s in "\\PC*") {
        let v = train_bpe(&["the cat is black, the dog is white,".into()], 300).unwrap();
        prop_assert_eq!(detokenize(&v, &tokenize(&v, &s)).unwrap(), s);
    }
}
