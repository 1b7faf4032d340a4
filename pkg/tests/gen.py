"""Shared randomized generators for property-style tests."""

import random
import string

HEADER_CHARS = string.ascii_letters + string.digits + "-_"
TOKEN_CHARS = string.ascii_letters + string.digits + "-._~/"


def json_value(rng: random.Random, depth: int = 0):
    """Random value from the JSON subset the system speaks (ints only)."""
    kinds = ["null", "bool", "int", "str"]
    if depth < 3:
        kinds += ["list", "dict", "dict"]
    kind = rng.choice(kinds)
    if kind == "null":
        return None
    if kind == "bool":
        return rng.random() < 0.5
    if kind == "int":
        return rng.choice([
            rng.randint(-100, 100),
            rng.randint(-(1 << 63), (1 << 63) - 1),
            0, -1, (1 << 63) - 1, -(1 << 63),
        ])
    if kind == "str":
        return json_string(rng)
    if kind == "list":
        return [json_value(rng, depth + 1) for _ in range(rng.randint(0, 4))]
    return {json_string(rng): json_value(rng, depth + 1)
            for _ in range(rng.randint(0, 4))}


def json_string(rng: random.Random) -> str:
    chars = []
    for _ in range(rng.randint(0, 12)):
        roll = rng.random()
        if roll < 0.7:
            chars.append(rng.choice(string.ascii_letters + string.digits + " _-"))
        elif roll < 0.8:
            chars.append(rng.choice('"\\/'))
        elif roll < 0.9:
            chars.append(chr(rng.randint(0, 0x1F)))
        else:
            chars.append(chr(rng.choice([0xE9, 0x2603, 0x1F6D2])))
    return "".join(chars)


def header_name(rng: random.Random) -> str:
    return "".join(rng.choice(HEADER_CHARS) for _ in range(rng.randint(1, 12)))


def header_value(rng: random.Random) -> str:
    return "".join(rng.choice(HEADER_CHARS + " ") for _ in range(rng.randint(0, 16))).strip()


def path(rng: random.Random) -> str:
    return "/" + "".join(rng.choice(TOKEN_CHARS) for _ in range(rng.randint(0, 24)))


def doc_id(rng: random.Random) -> str:
    return "".join(rng.choice("0123456789ABCDEF") for _ in range(8))


def doc_body(rng: random.Random) -> dict:
    """Random store document body without reserved fields."""
    body = {"name": json_string(rng) or "X"}
    if rng.random() < 0.5:
        body["cash"] = rng.randint(0, 10 ** 6)
    if rng.random() < 0.5:
        body["cost"] = rng.randint(0, 10 ** 4)
    if rng.random() < 0.3:
        body["history"] = [json_value(rng, 2) for _ in range(rng.randint(0, 3))]
    return body


def conservation_scenario(rng: random.Random, n_carts: int = 10,
                          n_tags: int = 200, rounds: int = 4) -> dict:
    """Busy-market scenario: private tag pools, a shared card on every third
    cart, ample cash so payments never bounce.  Every event time of cart i is
    congruent to i mod n_carts, so no two carts ever commit a payment in the
    same millisecond."""
    tags = [{"_id": "T%05d" % i, "name": "ITEM%d" % i,
             "cost": rng.randint(10, 500)} for i in range(n_tags)]
    users, user_of_cart = [], []
    for i in range(n_carts):
        if i % 3 == 2:
            user_of_cart.append(user_of_cart[i - 1])  # share the previous card
        else:
            uid = "U%07d" % i
            users.append({"_id": uid, "name": "SHOPPER %d" % i, "cash": 1_000_000})
            user_of_cart.append(uid)
    pools = [list(range(i, n_tags, n_carts)) for i in range(n_carts)]
    carts = []
    for i in range(n_carts):
        events = []
        t = 1000 * n_carts + i
        for _ in range(rounds):
            if not pools[i]:
                break
            events.append({"at": t, "card": user_of_cart[i]})
            t += n_carts * (5300 + rng.randint(0, 400))
            count = rng.randint(min(2, len(pools[i])), min(5, len(pools[i])))
            for _ in range(count):
                tag = pools[i].pop(rng.randrange(len(pools[i])))
                events.append({"at": t, "tag": tags[tag]["_id"]})
                t += n_carts * (250 + rng.randint(0, 200))
            events.append({"at": t, "button": "pay"})
            t += n_carts * (2500 + rng.randint(0, 300))
        carts.append({"id": "c%d" % i, "events": events})
    return {
        "seed": rng.randint(0, 2 ** 32),
        "users": users,
        "tags": tags,
        "carts": carts,
    }
