//! A deterministic template-based story writer implementing [`ChatBackend`].
//!
//! It recognises the generation prompts by their wording and answers in the
//! shape a chat model would (numbered lists, plans, revisions), so the whole
//! pipeline can run offline. Replies depend only on the request content and seed.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::backend::{ChatBackend, ChatRequest};
use super::parse::parse_numbered_list;
use super::prompt::{numbered, Role};
use crate::corpus::EmotionCategory;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default)]
pub struct SyntheticWriter;

const EVENT_PHRASES: [&str; 10] = [
    "suddenly stopped working",
    "arrived two hours late",
    "was quietly replaced by a cheaper version",
    "fell over in the middle of the program",
    "went missing right before the start",
    "drew a round of applause from everyone",
    "was handed to me by a complete stranger",
    "broke apart when I picked them up",
    "turned out to be exactly what we needed",
    "were left behind in the rain",
];

fn story_pool(emotion: EmotionCategory) -> [&'static str; 6] {
    use EmotionCategory::*;
    match emotion {
        Anger => [
            "My coworker promised to take care of the {thing} for me.",
            "I reminded him twice during the week.",
            "He laughed and said it was not his problem anymore.",
            "I found out he had blamed me in front of the organizers.",
            "The organizers asked me to explain the delay.",
            "I stayed up all night fixing what he had ignored.",
        ],
        Boredom => [
            "I arrived early and sat alone in the back row.",
            "The host read the same announcement for the third time.",
            "Nobody around me was talking about anything new.",
            "I checked the schedule and saw four more hours of speeches.",
            "The {thing} had been the only thing worth watching all day.",
            "I counted the ceiling tiles to pass the time.",
        ],
        Disgust => [
            "I noticed the {thing} had not been cleaned since last year.",
            "A strange smell came from the storage room.",
            "Someone had left half-eaten food next to the entrance.",
            "The helper wiped his nose and kept handling the supplies.",
            "Flies gathered around the leftovers on the table.",
            "I saw a greasy stain spreading across the floor.",
        ],
        Fear => [
            "The instructors told us to rely on the {thing} for every warning.",
            "A storm was approaching faster than expected.",
            "We lost sight of the rest of the group.",
            "I heard a loud crack somewhere behind us.",
            "The path ahead disappeared into thick fog.",
            "My phone battery died shortly after sunset.",
        ],
        Guilt => [
            "My friend trusted me to set up the {thing} for the evening.",
            "I skipped the final check to leave early.",
            "I told everyone that everything had been tested.",
            "My friend thanked me in front of the whole crowd.",
            "I ignored a warning light I had noticed earlier.",
            "I hid the spare parts I had promised to bring.",
        ],
        Joy => [
            "My best friends secretly planned a surprise for my birthday.",
            "We spent the afternoon laughing together in the sun.",
            "My favorite band started playing our song.",
            "Everyone I loved gathered around the {thing}.",
            "My sister arrived after two years abroad.",
            "The children danced around the garden.",
        ],
        Pride => [
            "I spent weeks preparing the {thing} on my own.",
            "My mentor doubted that I could finish in time.",
            "I solved the last problem an hour before the start.",
            "The judges stopped to look closely at my work.",
            "My team chose me to present our results.",
            "I practiced every evening after work.",
        ],
        Relief => [
            "I was responsible for the {thing} during the whole event.",
            "It kept making a painful noise that bothered everyone.",
            "The audience started complaining to the organizers.",
            "I could not find the switch to turn it off.",
            "The manager warned me that guests were leaving.",
            "I tried every button without success.",
        ],
        Sadness => [
            "My grandfather always took care of the {thing} at our gatherings.",
            "He passed away last winter.",
            "This was the first gathering without him.",
            "Everyone avoided mentioning his name.",
            "I found his old notes in a drawer.",
            "His chair stayed empty at the table.",
        ],
        Shame => [
            "I boasted to everyone that I knew how to handle the {thing}.",
            "My boss asked me to demonstrate it on stage.",
            "The whole department gathered to watch.",
            "I pressed the wrong button in front of everyone.",
            "A colleague quietly offered to help me.",
            "I had not read the manual at all.",
        ],
        Surprise => [
            "Nobody told me anything about changes to the {thing}.",
            "The program looked exactly like every other year.",
            "I expected another quiet and ordinary evening.",
            "The lights dimmed without any announcement.",
            "A stranger handed me an envelope with my name.",
            "The host paused and looked directly at me.",
        ],
        Trust => [
            "My partner had checked the {thing} many times before.",
            "She promised me she would handle any problem.",
            "I let her take the lead for the whole event.",
            "She had never let me down in ten years.",
            "She calmly explained the backup plan to me.",
            "She kept a spare set in her bag.",
        ],
        NoEmotion => [
            "I was working an ordinary shift at the venue.",
            "The {thing} belonged to another team.",
            "My task that day was counting the chairs.",
            "I had no stake in how the evening went.",
            "I wrote the numbers into a spreadsheet.",
            "My shift was ending in ten minutes.",
        ],
    }
}

const STOPWORDS: [&str; 12] = [
    "the", "and", "with", "that", "this", "from", "were", "have", "suddenly", "went", "after",
    "before",
];

fn key_noun(event: &str) -> String {
    event
        .split(|c: char| !c.is_alphabetic())
        .filter(|w| w.len() > 3 && !STOPWORDS.contains(&w.to_lowercase().as_str()))
        .max_by_key(|w| w.len())
        .map(str::to_lowercase)
        .unwrap_or_else(|| "equipment".to_owned())
}

fn between<'a>(text: &'a str, start: &str, end: &str) -> Option<&'a str> {
    let from = text.find(start)? + start.len();
    let len = text[from..].find(end)?;
    Some(&text[from..from + len])
}

fn backstory(emotion: EmotionCategory, event: &str, seed: u64) -> Vec<String> {
    let thing = key_noun(event);
    let pool = story_pool(emotion);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx: Vec<usize> = (1..pool.len()).collect();
    idx.shuffle(&mut rng);
    let mut chosen = vec![0];
    chosen.extend(idx.into_iter().take(3));
    chosen[1..].sort_unstable();
    chosen
        .into_iter()
        .map(|i| pool[i].replace("{thing}", &thing))
        .collect()
}

fn lower_first(s: &str) -> String {
    if s.starts_with("I ") {
        return s.to_owned();
    }
    let mut chars = s.chars();
    match chars.next() {
        Some(c) => c.to_lowercase().chain(chars).collect(),
        None => String::new(),
    }
}

impl SyntheticWriter {
    fn answer(&self, request: &ChatRequest) -> Result<String> {
        let system = request
            .messages
            .iter()
            .find(|m| m.role == Role::System)
            .map(|m| m.content.as_str())
            .unwrap_or("");
        let user = request
            .messages
            .iter()
            .rfind(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
            .unwrap_or("");
        let seed = request.seed;

        if system.starts_with("You are a person describing an event") {
            let object = between(user, "object(s): ", ". In your response").unwrap_or("equipment");
            let object = object.split(',').next().unwrap_or(object).trim();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let phrase = EVENT_PHRASES[rng.gen_range(0..EVENT_PHRASES.len())];
            return Ok(format!("The {object} {phrase}."));
        }
        if system.starts_with("You are an expert at adapting") {
            let block = between(user, "Event sequence: ", "\nFirst, provide")
                .ok_or_else(|| unrecognised("revision prompt without event sequence"))?;
            let chain = parse_numbered_list(block, 5)?;
            let mut revised = chain.clone();
            revised[0] = format!("Earlier that week, {}", lower_first(&chain[0]));
            revised[3] = format!("Shortly before, {}", lower_first(&chain[3]));
            return Ok(format!(
                "Evaluation: The first and fourth events can prepare the ending more directly.\n\nRevised event sequence:\n{}",
                numbered(&revised)
            ));
        }
        if user.starts_with("Extract the sequence") {
            let block = between(user, "### ", " ###").unwrap_or("");
            return match parse_numbered_list(block, 4) {
                Ok(items) => Ok(numbered(&items)),
                Err(_) => Ok(block.trim().to_owned()),
            };
        }
        let event = between(user, "5. \"", "\".").ok_or_else(|| unrecognised("no event"))?;
        let emotion: EmotionCategory = between(user, "feel the emotion: \"", "\"")
            .ok_or_else(|| unrecognised("no emotion"))?
            .parse()?;
        let story = backstory(emotion, event, seed);
        if user.contains("First, give a brief explanation") {
            return Ok(format!(
                "Explanation: The concluding event becomes meaningful once the earlier situation around the {} is known.\n\n{}",
                key_noun(event),
                numbered(&story)
            ));
        }
        if user.contains("Provide a text describing four events") {
            return Ok(numbered(&story));
        }
        Err(unrecognised("unknown prompt"))
    }
}

fn unrecognised(what: &str) -> Error {
    Error::Backend(format!("synthetic writer: {what}"))
}

impl ChatBackend for SyntheticWriter {
    fn complete(&self, request: &ChatRequest) -> Result<String> {
        self.answer(request)
    }
}
