use std::collections::HashMap;

use crate::error::{Error, Result};

pub const PAD: &str = "<pad>";
pub const BOS: &str = "<bos>";
pub const EOS: &str = "<eos>";
pub const IMG: &str = "<img>";
pub const USER: &str = "<user>";
pub const ASSISTANT: &str = "<assistant>";

pub const OPTION_LABELS: [&str; 4] = ["A", "B", "C", "D"];
pub const COLORS: [&str; 4] = ["red", "green", "blue", "yellow"];
pub const SHAPES: [&str; 4] = ["square", "circle", "triangle", "cross"];
pub const SIZES: [&str; 2] = ["small", "large"];

const TEMPLATE_WORDS: [&str; 14] = [
    "a", "this", "is", "photo", "of", "describe", "what", "choose", "shown", "in", "one", "the",
    "options", "answer",
];

/// Fixed word-level vocabulary. Ids are positions in the word list and never
/// change between runs.
#[derive(Clone, Debug)]
pub struct Vocab {
    words: Vec<&'static str>,
    ids: HashMap<&'static str, usize>,
}

impl Vocab {
    pub fn standard() -> Self {
        let words: Vec<&'static str> = [PAD, BOS, EOS, IMG, USER, ASSISTANT]
            .into_iter()
            .chain(OPTION_LABELS)
            .chain(COLORS)
            .chain(SHAPES)
            .chain(SIZES)
            .chain(TEMPLATE_WORDS)
            .collect();
        let ids = words.iter().enumerate().map(|(i, &w)| (w, i)).collect();
        Vocab { words, ids }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn id(&self, word: &str) -> Result<usize> {
        self.ids
            .get(word)
            .copied()
            .ok_or_else(|| Error::UnknownWord(word.to_string()))
    }

    pub fn word(&self, id: usize) -> Option<&'static str> {
        self.words.get(id).copied()
    }

    pub fn tokenize(&self, text: &str) -> Result<Vec<usize>> {
        text.split_whitespace().map(|w| self.id(w)).collect()
    }

    pub fn detokenize(&self, ids: &[usize]) -> Result<String> {
        let words = ids
            .iter()
            .map(|&i| {
                self.word(i)
                    .ok_or_else(|| Error::InvalidInput(format!("token id {i} outside vocabulary")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(words.join(" "))
    }

    /// Ids of the four option labels, in `A..D` order.
    pub fn label_ids(&self) -> Result<[usize; 4]> {
        Ok([
            self.id(OPTION_LABELS[0])?,
            self.id(OPTION_LABELS[1])?,
            self.id(OPTION_LABELS[2])?,
            self.id(OPTION_LABELS[3])?,
        ])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lookup() {
        let v = Vocab::standard();
        let ids = v.tokenize("a red square").unwrap();
        assert_eq!(
            ids,
            vec![
                v.id("a").unwrap(),
                v.id("red").unwrap(),
                v.id("square").unwrap()
            ]
        );
        assert!(v.tokenize("").unwrap().is_empty());
    }

    #[test]
    fn unknown_word_is_named() {
        let v = Vocab::standard();
        match v.tokenize("a purple square") {
            Err(Error::UnknownWord(w)) => assert_eq!(w, "purple"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bijective() {
        let v = Vocab::standard();
        for i in 0..v.len() {
            assert_eq!(v.id(v.word(i).unwrap()).unwrap(), i);
        }
        // option labels are distinct from the article "a"
        assert_ne!(v.id("A").unwrap(), v.id("a").unwrap());
    }

    #[test]
    fn ids_are_stable() {
        let v = Vocab::standard();
        assert_eq!(v.len(), 34);
        assert_eq!(v.id(BOS).unwrap(), 1);
        assert_eq!(v.id("A").unwrap(), 6);
        assert_eq!(v.id("red").unwrap(), 10);
    }
}
