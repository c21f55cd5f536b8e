import easyocr
import numpy as np

reader = easyocr.Reader(["en"], gpu=False)
results = reader.readtext(np.array(image_clue_0))

for bbox, text, conf in results:
    print(f"{text!r}  confidence={conf:.2f}")
