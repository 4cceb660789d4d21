#!/usr/bin/env python3
"""Regenerates data/minicorpus.txt, the training text of the toy bigram backend.

One paragraph per line; sentences are drawn from fixed templates with a fixed
seed so the file is reproducible.
"""
import random
import sys

SUBJECTS = ["the cat", "a dog", "the doctor", "my friend", "the teacher", "a student",
            "the chef", "our team", "the writer", "a scientist", "the child", "the farmer",
            "people", "students", "doctors", "many experts", "the manager", "a nurse"]
VERBS = ["eats", "likes", "writes", "reads", "explains", "describes", "makes", "finds",
         "needs", "shares", "lists", "gives", "suggests", "creates", "studies", "keeps"]
OBJECTS = ["a healthy meal", "fresh fruit", "three tips", "a short story", "the answer",
           "a long essay", "clean water", "good advice", "a simple plan", "the main idea",
           "five examples", "a new recipe", "the best method", "a clear summary",
           "some vegetables", "a daily routine", "the weather report", "a poem",
           "the budget", "two reasons", "a list of colors", "the history of rome"]
ADVERBS = ["every day", "at night", "in the morning", "with care", "quickly", "slowly",
           "at school", "at home", "after work", "before dinner", "on weekends", "often"]
ADVICE = ["eat a balanced diet", "drink enough water", "get enough sleep",
          "exercise regularly", "manage stress", "avoid smoking", "limit sugar",
          "walk every day", "read good books", "write every morning", "plan your week",
          "take short breaks", "stay active", "eat more vegetables", "visit a doctor"]
TOPICS = ["health", "science", "history", "music", "cooking", "sleep", "exercise",
          "writing", "math", "art", "travel", "nature", "water", "energy", "money"]


def sentence(rng):
    kind = rng.randrange(8)
    if kind == 0:
        return f"{rng.choice(SUBJECTS)} {rng.choice(VERBS)} {rng.choice(OBJECTS)} {rng.choice(ADVERBS)} ."
    if kind == 1:
        return f"to stay healthy , {rng.choice(ADVICE)} and {rng.choice(ADVICE)} ."
    if kind == 2:
        return f"give three tips for {rng.choice(TOPICS)} : {rng.choice(ADVICE)} , {rng.choice(ADVICE)} , and {rng.choice(ADVICE)} ."
    if kind == 3:
        return f"what is the best way to learn {rng.choice(TOPICS)} ? {rng.choice(ADVICE)} ."
    if kind == 4:
        return f"write {rng.choice(OBJECTS)} about {rng.choice(TOPICS)} ."
    if kind == 5:
        return f"{rng.choice(SUBJECTS)} {rng.choice(VERBS)} that {rng.choice(TOPICS)} is important for {rng.choice(SUBJECTS)} ."
    if kind == 6:
        return f"explain why {rng.choice(TOPICS)} matters and describe {rng.choice(OBJECTS)} ."
    return f"1 . {rng.choice(ADVICE)} . 2 . {rng.choice(ADVICE)} . 3 . {rng.choice(ADVICE)} ."


def main():
    rng = random.Random(20240601)
    out = sys.stdout
    written = 0
    while written < 1000:
        n = rng.randint(8, 16)
        out.write(" ".join(sentence(rng) for _ in range(n)) + "\n")
        written += n


if __name__ == "__main__":
    main()
