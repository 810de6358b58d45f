/// An event type with example objects used to diversify generated events.
#[derive(Debug, Clone, Copy)]
pub struct EventType {
    pub name: &'static str,
    pub objects: &'static [&'static str],
}

impl EventType {
    pub fn find(name: &str) -> Option<&'static EventType> {
        EVENT_TYPES.iter().find(|t| t.name.eq_ignore_ascii_case(name))
    }
}

/// The ten event types and their example objects.
pub static EVENT_TYPES: [EventType; 10] = [
    EventType {
        name: "Social Gathering",
        objects: &[
            "chairs", "tables", "food platters", "drinks", "napkins", "decorations",
            "music speakers", "games", "invitation cards", "host", "guests", "tablecloths",
            "candles", "balloons", "party favors", "photo booth", "name tags", "cutlery",
            "glasses", "ice bucket",
        ],
    },
    EventType {
        name: "Educational Activity",
        objects: &[
            "textbooks", "notebooks", "pencils", "whiteboard", "markers", "projector",
            "handouts", "calculator", "overhead projector", "globe", "poster board", "computer",
            "scissors", "gluestick", "craft supplies", "timers", "textual resources",
            "reference books", "tables", "student desks",
        ],
    },
    EventType {
        name: "Recreational and Nature Activity",
        objects: &[
            "hiking boots", "backpacks", "water bottles", "first-aid kit", "campfire supplies",
            "nature guide", "binoculars", "tent", "sleeping bags", "camping chairs",
            "fishing gear", "bicycles", "kayaks", "picnic basket", "coolers", "maps",
            "sunscreen", "bug spray", "fishing rods", "swimming gear",
        ],
    },
    EventType {
        name: "Cultural and Community Event",
        objects: &[
            "stage", "performers", "sound system", "projector", "festival tickets", "food stalls",
            "craft booths", "cultural displays", "artworks", "costumes", "brochures",
            "community posters", "instruments", "banners", "seating areas", "local products",
            "vendors", "volunteers", "refreshments", "cultural symbols",
        ],
    },
    EventType {
        name: "Professional Development",
        objects: &[
            "business cards", "presentation slides", "notebooks", "pens", "projector",
            "handouts", "networking tools", "feedback forms", "laptops", "name badges",
            "workshops", "career fair flyers", "industry reports", "coffee cups",
            "panel discussion guides", "training materials", "lecture notes",
            "team-building activities", "case studies", "clipboards",
        ],
    },
    EventType {
        name: "Celebration",
        objects: &[
            "cake", "candles", "party hats", "balloons", "confetti", "party favors", "streamers",
            "drinks", "gift bags", "music playlist", "photo booth", "decorations",
            "invitation cards", "celebration banner", "tables", "chairs", "food platters",
            "glasses", "plates", "silverware",
        ],
    },
    EventType {
        name: "Artistic Performance",
        objects: &[
            "stage", "costumes", "sets", "props", "lights", "sound equipment",
            "musical instruments", "audience seats", "backdrops", "tickets", "makeup kit",
            "rehearsal schedule", "choreography notes", "great hits collection", "piano",
            "amplifiers", "performance schedule", "music sheets", "playbill", "actors",
        ],
    },
    EventType {
        name: "Competition",
        objects: &[
            "trophies", "medals", "referee kit", "scoreboard", "team jerseys", "game equipment",
            "whistle", "competition schedule", "event tickets", "player registration",
            "crowd barriers", "timing devices", "venue maps", "registration forms",
            "team banners", "score sheets", "first aid kits", "video cameras",
            "performance analytics", "heat sheets",
        ],
    },
    EventType {
        name: "Family and Relationships",
        objects: &[
            "family photo albums", "toys", "family tree chart", "gift cards",
            "family recipe book", "family calendars", "cameraman", "outdoor equipment", "gifts",
            "personalized items", "family game night materials", "storybooks", "name tags",
            "family bonding games", "sentimental objects", "blankets", "picnic spreads",
            "board games", "interactive toys", "family outings",
        ],
    },
    EventType {
        name: "Transportation and Travel Event",
        objects: &[
            "maps", "itineraries", "backpacks", "suitcases", "boarding passes", "tickets",
            "travel guides", "snacks", "passports", "travel pillows", "sunscreen",
            "water bottles", "portable chargers", "cameras", "compact umbrellas", "guidebooks",
            "tour buses", "airport shuttles", "magazine subscriptions", "reservation forms",
        ],
    },
];
