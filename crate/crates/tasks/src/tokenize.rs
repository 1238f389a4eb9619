/// Lowercase `text` and split on every maximal run of non-alphanumeric
/// characters. No stemming, no stopwords.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::tokenize;

    #[test]
    fn case_and_punctuation() {
        assert_eq!(tokenize("Good, GREAT!"), vec!["good", "great"]);
    }

    #[test]
    fn empty() {
        assert!(tokenize("").is_empty());
        assert!(tokenize(" ,;- ").is_empty());
    }

    #[test]
    fn digits_stay_in_tokens() {
        assert_eq!(tokenize("a1-b2"), vec!["a1", "b2"]);
    }

    #[test]
    fn unicode_letters_are_alphanumeric() {
        assert_eq!(tokenize("Über-gut"), vec!["über", "gut"]);
    }
}
