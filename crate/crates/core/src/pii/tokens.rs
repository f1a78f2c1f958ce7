/// Splits an identifier into lowercase tokens at separators, camelCase
/// humps and letter/digit boundaries: `userPhoneNumber2` becomes
/// `[user, phone, number, 2]`, `parseURLValue` becomes `[parse, url, value]`.
pub fn tokenize(identifier: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    for part in identifier.split(|c: char| !c.is_alphanumeric()) {
        let chars: Vec<char> = part.chars().collect();
        let mut start = 0;
        for i in 1..chars.len() {
            let (prev, cur) = (chars[i - 1], chars[i]);
            let next_lower = chars.get(i + 1).is_some_and(|c| c.is_lowercase());
            let boundary = (prev.is_lowercase() && cur.is_uppercase())
                || (prev.is_uppercase() && cur.is_uppercase() && next_lower)
                || (prev.is_alphabetic() != cur.is_alphabetic());
            if boundary {
                tokens.push(chars[start..i].iter().collect::<String>().to_lowercase());
                start = i;
            }
        }
        if start < chars.len() {
            tokens.push(chars[start..].iter().collect::<String>().to_lowercase());
        }
    }
    tokens
}

/// Lowercase words of free text, split at anything not alphanumeric.
pub fn words(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Whether `needle` occurs as a contiguous run inside `haystack`.
pub fn contains_run(haystack: &[String], needle: &[String]) -> bool {
    !needle.is_empty() && haystack.windows(needle.len()).any(|w| w == needle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identifier_shapes() {
        assert_eq!(tokenize("personal_details_name"), ["personal", "details", "name"]);
        assert_eq!(tokenize("userPhoneNumber"), ["user", "phone", "number"]);
        assert_eq!(tokenize("parseURLValue"), ["parse", "url", "value"]);
        assert_eq!(tokenize("address2-line"), ["address", "2", "line"]);
        assert_eq!(tokenize("username"), ["username"]);
        assert_eq!(tokenize("submit_button"), ["submit", "button"]);
        assert!(tokenize("__").is_empty());
    }

    #[test]
    fn free_text_words() {
        assert_eq!(words("Full name:"), ["full", "name"]);
    }

    #[test]
    fn runs() {
        let h = tokenize("user_phone_number");
        assert!(contains_run(&h, &tokenize("phone number")));
        assert!(!contains_run(&h, &tokenize("number phone")));
        assert!(!contains_run(&h, &[]));
    }

    proptest! {
        #[test]
        fn tokens_are_lowercase_and_nonempty(s in "\\PC{0,40}") {
            for t in tokenize(&s) {
                prop_assert!(!t.is_empty());
                prop_assert_eq!(t.to_lowercase(), t.clone());
            }
        }
    }
}
