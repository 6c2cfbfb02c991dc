//! Processing-path rendering. Tokens labelled by word-level actions and
//! tokens labelled by sentence- or paragraph-level actions get different
//! colour classes; each action's coverage is one region.

use std::fmt::Write as _;

use crate::actions::Level;
use crate::controller::EpisodeTrace;
use crate::corpus::Document;

const ANSI_WORD: &str = "\x1b[31m";
const ANSI_HIGH: &str = "\x1b[34m";
const ANSI_RESET: &str = "\x1b[0m";

/// One action's coverage: token range, acting level and step number.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Region {
    pub step: usize,
    pub level: Level,
    pub tokens: std::ops::Range<usize>,
}

pub fn regions(trace: &EpisodeTrace) -> Vec<Region> {
    trace
        .steps
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let start = s.location[0] - 1;
            Region {
                step: k + 1,
                level: s.action.level,
                tokens: start..start + s.emitted.len(),
            }
        })
        .collect()
}

fn class(level: Level) -> &'static str {
    match level {
        Level::Word => "word",
        Level::Sentence | Level::Paragraph => "high",
    }
}

pub fn render_ansi(doc: &Document, trace: &EpisodeTrace) -> String {
    let mut out = String::new();
    for r in regions(trace) {
        let colour = if r.level == Level::Word { ANSI_WORD } else { ANSI_HIGH };
        out.push_str(colour);
        for t in r.tokens.clone() {
            let _ = write!(out, "{}/{} ", doc.tokens()[t], trace.labels[t]);
        }
        out.push_str(ANSI_RESET);
        if doc.sentences().iter().any(|s| s.end == r.tokens.end) {
            out.push('\n');
        }
    }
    out.push('\n');
    out.push_str(&trace.to_text());
    out
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            _ => out.push(c),
        }
    }
    out
}

/// Self-contained static page (inline CSS, no scripts).
pub fn render_html(doc: &Document, trace: &EpisodeTrace) -> String {
    let mut out = String::new();
    let _ = write!(
        out,
        "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>{}</title>\n<style>\n\
         body{{font-family:sans-serif;max-width:60em;margin:2em auto}}\n\
         .region{{border-radius:3px;padding:1px 2px;margin:1px}}\n\
         .word{{background:#f8d0d0;color:#900}}\n\
         .high{{background:#d0dcf8;color:#036}}\n\
         .tok sub{{font-size:60%}}\n\
         table{{border-collapse:collapse;font-size:85%}} td,th{{border:1px solid #ccc;padding:2px 6px}}\n\
         </style></head><body>\n<h1>{}</h1>\n",
        escape(doc.id()),
        escape(doc.id())
    );
    let regions = regions(trace);
    let mut next = regions.iter().peekable();
    for p in 0..doc.paragraphs().len() {
        let _ = writeln!(out, "<p data-paragraph=\"{}\">", p + 1);
        let end = doc.paragraph_tokens(p).end;
        while let Some(r) = next.next_if(|r| r.tokens.start < end) {
            let _ = write!(
                out,
                "<span class=\"region {}\" title=\"step {}: {}\">",
                class(r.level),
                r.step,
                trace.steps[r.step - 1].action
            );
            for t in r.tokens.clone() {
                let _ = write!(
                    out,
                    "<span class=\"tok\">{}<sub>{}</sub></span> ",
                    escape(&doc.tokens()[t]),
                    trace.labels[t]
                );
            }
            out.push_str("</span>\n");
        }
        out.push_str("</p>\n");
    }
    out.push_str("<table><tr><th>step</th><th>location</th><th>action</th><th>labels</th></tr>\n");
    for (k, s) in trace.steps.iter().enumerate() {
        let [w, se, p] = s.location;
        let _ = writeln!(
            out,
            "<tr class=\"{}\"><td>{}</td><td>[{w},{se},{p}]</td><td>{}</td><td>{}</td></tr>",
            class(s.action.level),
            k + 1,
            s.action,
            s.emitted.len()
        );
    }
    let _ = writeln!(
        out,
        "</table>\n<p class=\"summary\">N_aw {} | N_as {} | N_ap {} | wlar {:.4}</p>\n</body></html>",
        trace.counts.word,
        trace.counts.sentence,
        trace.counts.paragraph,
        trace.wlar()
    );
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::actions::{Action, LevelCounts};
    use crate::controller::TraceStep;
    use crate::corpus::{Bio, Span};

    fn doc() -> Document {
        use Bio::*;
        let mut gold = vec![B, I, I, I, I, I, I, I, O, O, O, O, B];
        gold.extend([I; 4]);
        Document::new(
            "ex<1>",
            (0..17).map(|k| format!("w{k}")).collect(),
            vec![Span::new(0, 8), Span::new(8, 12), Span::new(12, 17)],
            vec![Span::new(0, 2), Span::new(2, 3)],
            Some(gold),
        )
        .unwrap()
    }

    fn trace_of(doc: &Document, script: &[Action]) -> EpisodeTrace {
        let (history, labels, _) = crate::actions::run_script(doc, script);
        let mut steps = Vec::new();
        let mut pos = 0;
        for (loc, a) in &history {
            let emitted = crate::actions::execute(*a, *loc, doc);
            pos += emitted.len();
            steps.push(TraceStep {
                location: loc.triple().unwrap(),
                distribution: [1.0 / 9.0; 9],
                action: *a,
                emitted,
            });
        }
        assert_eq!(pos, doc.len());
        EpisodeTrace {
            doc_id: doc.id().into(),
            counts: LevelCounts::from_actions(history.iter().map(|(_, a)| a)),
            steps,
            labels,
        }
    }

    #[test]
    fn sentence_action_is_one_high_region() {
        let d = doc();
        let w_o = Action::new(Level::Word, Bio::O);
        let script = [
            Action::new(Level::Sentence, Bio::B),
            w_o,
            w_o,
            w_o,
            w_o,
            Action::new(Level::Paragraph, Bio::B),
        ];
        let t = trace_of(&d, &script);
        let r = regions(&t);
        assert_eq!(r[0].tokens, 0..8);
        assert_eq!(r[0].level, Level::Sentence);
        let html = render_html(&d, &t);
        assert_eq!(html.matches("class=\"tok\"").count(), d.len());
        assert_eq!(html.matches("<span class=\"region high\"").count(), 2);
        assert!(!html.contains("<script"));
        assert!(html.contains("ex&lt;1&gt;"));
        let ansi = render_ansi(&d, &t);
        assert!(ansi.contains("summary | N_aw 4 | N_as 1 | N_ap 1"));
    }

    #[test]
    fn all_word_level_is_all_word_class() {
        let d = doc();
        let script: Vec<Action> = d.labels().unwrap().iter().map(|&l| Action::new(Level::Word, l)).collect();
        let t = trace_of(&d, &script);
        let html = render_html(&d, &t);
        assert_eq!(html.matches("<span class=\"region word\"").count(), d.len());
        assert!(!html.contains("region high"));
        assert_eq!(html.matches("class=\"tok\"").count(), d.len());
    }
}
