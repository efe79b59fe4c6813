#!/usr/bin/env python3
"""Render the OCR test fixture pages.

Produces two classes of synthetic page images (invoices and letters) with
well-separated text areas so automatic page segmentation yields several
regions per page. Run once from the extractor directory; the PNGs are
committed so tests do not depend on PIL.
"""

import json
import pathlib
import random

from PIL import Image, ImageDraw, ImageFont

FONT = "/usr/share/fonts/truetype/dejavu/DejaVuSans.ttf"
OUT = pathlib.Path(__file__).resolve().parent.parent / "fixtures"
PAGE = (850, 1100)

INVOICE_LINES = [
    "Customer billing address and account number\nare listed in this section of the page.",
    "Item quantity and unit price for each product\nordered during the billing period shown.",
    "Total amount due is {amount} dollars payable\nwithin thirty days of the statement date.",
    "Late payments accrue interest at two percent\nper month on the outstanding balance.",
    "Remit payment to the accounts office using\nthe reference number printed above.",
]

LETTER_LINES = [
    "Dear customer thank you for writing to us\nabout your recent experience with our team.",
    "We have reviewed the details you provided\nand appreciate your patience in this matter.",
    "Our support staff will contact you within\nfive business days with a full response.",
    "Please keep this letter for your records\nand quote it in any further correspondence.",
    "We value your continued trust and look\nforward to serving you again in the future.",
]


def render(path, title, paragraphs):
    img = Image.new("RGB", PAGE, "white")
    draw = ImageDraw.Draw(img)
    title_font = ImageFont.truetype(FONT, 42)
    body_font = ImageFont.truetype(FONT, 24)
    width = draw.textlength(title, font=title_font)
    draw.text(((PAGE[0] - width) / 2, 45), title, font=title_font, fill="black")
    y = 260
    for text in paragraphs:
        draw.text((70, y), text, font=body_font, fill="black")
        y += 260
    img.save(path)


def main():
    rng = random.Random(7)
    for class_dir, title_pool, lines in (
        ("invoice", ["INVOICE", "INVOICE STATEMENT"], INVOICE_LINES),
        ("letter", ["CUSTOMER LETTER", "NOTICE"], LETTER_LINES),
    ):
        directory = OUT / class_dir
        directory.mkdir(parents=True, exist_ok=True)
        for i in range(6):
            picks = rng.sample(lines, 3)
            picks = [p.format(amount=rng.randint(100, 900)) for p in picks]
            render(directory / f"doc{i:02d}.png", rng.choice(title_pool), picks)
    labels = {"invoice": "invoice", "letter": "letter"}
    (OUT / "labels.json").write_text(json.dumps(labels, indent=2) + "\n")
    print(f"wrote fixtures under {OUT}")


if __name__ == "__main__":
    main()
