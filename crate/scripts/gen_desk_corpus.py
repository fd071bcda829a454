#!/usr/bin/env python3
"""Generate the bundled desk-scale caption corpus.

Writes data/desk_corpus.tsv (1,000 captions, 5 per image) and
data/desk_heldout.tsv (held-out captions that contain words rare in or
absent from the training file). Output is fully determined by SEED.
"""
import random
from pathlib import Path

SEED = 20210416

NOUNS = """cat dog man woman boy girl child person player skier surfer rider horse cow sheep
elephant giraffe zebra bear bird duck pigeon seagull kite plane airplane train bus truck car
motorcycle bicycle bike boat ship table chair couch bench bed desk laptop computer keyboard
phone television remote clock vase bowl plate cup mug bottle glass pizza sandwich cake donut
banana apple orange broccoli carrot hotdog umbrella bag backpack suitcase frisbee ball racket
skateboard surfboard snowboard skis tree grass field street road sidewalk beach ocean wave
water river lake mountain hill snow sky cloud building house kitchen bathroom toilet sink
window door wall floor counter shelf fence sign light pole stop hydrant tower bridge park
garden flower plant giraffes zebras elephants sheep cows dogs cats men women people children
players kids horses birds trucks cars buses boats plates bowls cups bananas apples oranges
umbrellas benches chairs tables trees clouds buildings signs lights flowers""".split()

ADJS = """black white brown red blue green yellow orange gray pink purple small large big little
young old tall short wooden metal plastic empty full open closed busy crowded clean dirty
colorful bright dark sunny cloudy snowy grassy sandy rocky modern vintage cute fluffy striped
spotted shiny wet dry tiny huge giant various several two three four many""".split()

VERBS = """sitting standing holding riding eating playing climbing walking looking flying running
jumping laying lying carrying watching throwing catching swinging surfing skiing skating
drinking cooking cutting talking smiling posing waiting parked driving crossing grazing
resting sleeping leaning hanging floating swimming pulling pushing reading using wearing
displayed filled covered topped stacked lined decorated painted""".split()

PREPS = """on in near next to under above behind beside by at with from along across over
inside outside between""".split()

PLACES = """the street the road the beach the ocean the water the field the grass the snow
the sidewalk the park the kitchen the table a table a plate a bench the counter the floor
the sky the air a building the city the yard a fence the river a lake the hill the slope
the court the track the desk a bed the couch a room the window a shelf the zoo a pen the
dirt the sand the waves a boat the tracks the station the corner the parking lot""".split("\n")
PLACES = [p.strip() for line in PLACES for p in line.split(" the ") if p.strip()]

def zipf_choice(rng, items, s=1.1):
    weights = [1.0 / (i + 1) ** s for i in range(len(items))]
    return rng.choices(items, weights=weights, k=1)[0]

def noun_phrase(rng):
    det = rng.choice(["a", "a", "the", "an" , "some", "two"])
    parts = [det]
    if rng.random() < 0.55:
        parts.append(zipf_choice(rng, ADJS))
    parts.append(zipf_choice(rng, NOUNS))
    if parts[0] == "an":
        parts[0] = "a"
    return " ".join(parts)

def place(rng):
    p = zipf_choice(rng, PLACES, s=0.9)
    if not p.startswith(("the ", "a ")):
        p = "the " + p
    return p

def caption(rng):
    t = rng.random()
    if t < 0.45:
        words = [noun_phrase(rng), "is", zipf_choice(rng, VERBS), zipf_choice(rng, PREPS), place(rng)]
    elif t < 0.75:
        words = [noun_phrase(rng), zipf_choice(rng, VERBS), zipf_choice(rng, PREPS), noun_phrase(rng)]
    elif t < 0.9:
        words = ["there", "is", noun_phrase(rng), zipf_choice(rng, PREPS), place(rng)]
    else:
        words = [noun_phrase(rng), "and", noun_phrase(rng), zipf_choice(rng, VERBS),
                 zipf_choice(rng, PREPS), place(rng), "with", noun_phrase(rng)]
    text = " ".join(words)
    if rng.random() < 0.3:
        text = text[0].upper() + text[1:]
    if rng.random() < 0.2:
        text += " ."
    return text

HELDOUT = [
    "a woman crochets a colorful blanket on the couch",
    "an old man whittles a wooden spoon near the window",
    "a tabby cat is climbing a tree in the yard",
    "a giraffe nibbles leaves from a tall acacia tree",
    "two kids are building a sandcastle on the beach",
    "a barista pours latte art into a mug",
    "a snowboarder carves down a powdery slope",
    "a dog is chasing a frisbee across the grass",
    "a man is holding an umbrella on a rainy street",
    "a hummingbird hovers near a bright red flower",
]

def main():
    rng = random.Random(SEED)
    root = Path(__file__).resolve().parent.parent / "data"
    root.mkdir(exist_ok=True)
    lines = ["# desk caption corpus: image_id<TAB>caption"]
    for img in range(200):
        for _ in range(5):
            lines.append(f"img{img:04d}\t{caption(rng)}")
    (root / "desk_corpus.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    held = ["# held-out captions with rare words"]
    held += [f"held{i:03d}\t{c}" for i, c in enumerate(HELDOUT)]
    (root / "desk_heldout.tsv").write_text("\n".join(held) + "\n", encoding="utf-8")

if __name__ == "__main__":
    main()
