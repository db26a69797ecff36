//! Best-effort main-text extraction from HTML.

const SKIPPED: &[&str] = &["script", "style", "nav", "header", "footer", "head", "noscript", "template"];
const RAW_TEXT: &[&str] = &["script", "style"];
const BLOCK: &[&str] = &[
    "address", "article", "aside", "blockquote", "br", "dd", "div", "dl", "dt", "figcaption", "figure", "form", "h1",
    "h2", "h3", "h4", "h5", "h6", "hr", "li", "main", "ol", "p", "pre", "section", "table", "tr", "ul",
];

fn looks_like_html(s: &str) -> bool {
    let b = s.as_bytes();
    b.windows(2)
        .any(|w| w[0] == b'<' && (w[1].is_ascii_alphabetic() || w[1] == b'/' || w[1] == b'!'))
}

fn decode_entity(name: &str) -> Option<char> {
    if let Some(num) = name.strip_prefix('#') {
        let code = match num.strip_prefix(['x', 'X']) {
            Some(hex) => u32::from_str_radix(hex, 16).ok()?,
            None => num.parse().ok()?,
        };
        return char::from_u32(code);
    }
    Some(match name {
        "amp" => '&',
        "lt" => '<',
        "gt" => '>',
        "quot" => '"',
        "apos" => '\'',
        "nbsp" => ' ',
        "ndash" => '\u{2013}',
        "mdash" => '\u{2014}',
        "hellip" => '\u{2026}',
        "copy" => '\u{a9}',
        "reg" => '\u{ae}',
        "lsquo" => '\u{2018}',
        "rsquo" => '\u{2019}',
        "ldquo" => '\u{201c}',
        "rdquo" => '\u{201d}',
        _ => return None,
    })
}

fn decode_entities(s: &str, out: &mut String) {
    let mut rest = s;
    while let Some(i) = rest.find('&') {
        out.push_str(&rest[..i]);
        let tail = &rest[i + 1..];
        let end = tail.find(';').filter(|&e| e > 0 && e <= 10);
        match end.and_then(|e| decode_entity(&tail[..e]).map(|c| (e, c))) {
            Some((e, c)) => {
                out.push(c);
                rest = &tail[e + 1..];
            }
            None => {
                out.push('&');
                rest = tail;
            }
        }
    }
    out.push_str(rest);
}

/// Tag name and whether it closes, from the inside of `<...>`.
fn tag_name(inner: &str) -> (String, bool) {
    let (closing, body) = match inner.strip_prefix('/') {
        Some(b) => (true, b),
        None => (false, inner),
    };
    let name: String = body
        .chars()
        .take_while(|c| c.is_ascii_alphanumeric())
        .collect::<String>()
        .to_ascii_lowercase();
    (name, closing)
}

/// Visible text with boilerplate elements removed and one line per block.
pub fn html_to_text(html: &str) -> String {
    if !looks_like_html(html) {
        return html.to_string();
    }
    let mut raw = String::new();
    let mut skip_depth = 0usize;
    let mut i = 0;
    let bytes = html.as_bytes();
    while i < html.len() {
        if bytes[i] != b'<' {
            let next = html[i..].find('<').map_or(html.len(), |n| i + n);
            if skip_depth == 0 {
                decode_entities(&html[i..next], &mut raw);
            }
            i = next;
            continue;
        }
        if html[i..].starts_with("<!--") {
            i = html[i + 4..].find("-->").map_or(html.len(), |n| i + 4 + n + 3);
            continue;
        }
        let Some(close) = html[i..].find('>') else {
            if skip_depth == 0 {
                decode_entities(&html[i..], &mut raw);
            }
            break;
        };
        let inner = &html[i + 1..i + close];
        i += close + 1;
        let (name, closing) = tag_name(inner);
        if name.is_empty() {
            continue;
        }
        if RAW_TEXT.contains(&name.as_str()) && !closing && !inner.ends_with('/') {
            // contents are not markup; jump to the matching close tag
            let lower = html[i..].to_ascii_lowercase();
            i = lower.find(&format!("</{name}")).map_or(html.len(), |n| {
                let after = i + n;
                html[after..].find('>').map_or(html.len(), |m| after + m + 1)
            });
            continue;
        }
        if SKIPPED.contains(&name.as_str()) {
            if closing {
                skip_depth = skip_depth.saturating_sub(1);
            } else if !inner.ends_with('/') {
                skip_depth += 1;
            }
            continue;
        }
        if BLOCK.contains(&name.as_str()) {
            raw.push('\n');
        } else if skip_depth == 0 && matches!(name.as_str(), "td" | "th") {
            raw.push(' ');
        }
    }
    raw.lines()
        .map(|l| l.split_whitespace().collect::<Vec<_>>().join(" "))
        .filter(|l| !l.is_empty())
        .collect::<Vec<_>>()
        .join("\n")
}
