#![allow(dead_code)]

use std::path::PathBuf;

use proptest::prelude::*;
use rcscore::corpus::{AnnotatedDocument, SentenceAnnotation, StyleId, TokenAnnotation};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn golden(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

const WORDS: [&str; 12] = [
    "the", "sum", "is", "we", "add", "two", "numbers", "then", "divide", "answer", "so", "four",
];
const POS: [&str; 5] = ["NOUN", "VERB", "DET", "NUM", "PUNCT"];
const DEPS: [&str; 4] = ["nsubj", "obj", "det", "nummod"];

fn sentence(embedded: bool) -> impl Strategy<Value = SentenceAnnotation> {
    (1usize..7).prop_flat_map(move |n| {
        let emb = if embedded {
            proptest::collection::vec(0.1f64..1.0, 3).prop_map(Some).boxed()
        } else {
            Just(None).boxed()
        };
        (
            proptest::collection::vec(proptest::sample::select(&WORDS[..]), n),
            proptest::collection::vec(proptest::sample::select(&POS[..]), n),
            proptest::collection::vec(proptest::sample::select(&DEPS[..]), n),
            0..n,
            proptest::collection::vec(0..n.max(2) - 1, n),
            emb,
        )
            .prop_map(move |(words, pos, deps, root, heads, embedding)| {
                let tokens: Vec<TokenAnnotation> = (0..n)
                    .map(|i| {
                        let (dep, head) = if i == root {
                            ("root", i)
                        } else {
                            let h = heads[i];
                            (deps[i], if h >= i { h + 1 } else { h })
                        };
                        TokenAnnotation {
                            text: words[i].to_owned(),
                            pos: pos[i].to_owned(),
                            dep: dep.to_owned(),
                            head,
                        }
                    })
                    .collect();
                SentenceAnnotation {
                    text: words.join(" "),
                    start: 0,
                    end: 0,
                    embedding,
                    tokens,
                }
            })
    })
}

fn with_offsets(problem_id: &str, style: StyleId, mut sentences: Vec<SentenceAnnotation>) -> AnnotatedDocument {
    let mut offset = 0;
    for s in &mut sentences {
        let len = s.text.chars().count();
        s.start = offset;
        s.end = offset + len;
        offset += len + 1;
    }
    AnnotatedDocument {
        problem_id: problem_id.to_owned(),
        style,
        sentences,
    }
}

pub fn document(embedded: bool, max_sentences: usize) -> impl Strategy<Value = AnnotatedDocument> {
    proptest::collection::vec(sentence(embedded), 1..=max_sentences)
        .prop_map(|s| with_offsets("gen", StyleId::Declarative, s))
}

/// Pairs of annotated documents; both carry embeddings or neither does.
pub fn document_pair() -> impl Strategy<Value = (AnnotatedDocument, AnnotatedDocument)> {
    any::<bool>().prop_flat_map(|embedded| (document(embedded, 9), document(embedded, 9)))
}

/// Document whose sentences are pairwise distinct, each tagged with its index.
pub fn distinct_document(min: usize, max: usize) -> impl Strategy<Value = AnnotatedDocument> {
    proptest::collection::vec(sentence(false), min..=max).prop_map(|mut sentences| {
        for (i, s) in sentences.iter_mut().enumerate() {
            let marker = format!("marker{i}");
            s.text = format!("{} {marker}", s.text);
            let root = s.tokens.iter().position(|t| t.dep == "root").unwrap();
            s.tokens.push(TokenAnnotation {
                text: marker,
                pos: "PROPN".into(),
                dep: "obj".into(),
                head: root,
            });
        }
        with_offsets("gen", StyleId::Declarative, sentences)
    })
}

pub fn reversed(doc: &AnnotatedDocument) -> AnnotatedDocument {
    let texts: Vec<SentenceAnnotation> = doc.sentences.iter().rev().cloned().collect();
    with_offsets(&doc.problem_id, doc.style, texts)
}
