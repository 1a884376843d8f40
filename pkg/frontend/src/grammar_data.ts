// GENERATED by scripts/sync-grammar.mjs from the backend grammar file.
// Do not edit by hand; run `npm run sync-grammar`.
export const GRAMMAR = {
  "separator": "-",
  "tops": {
    "A": {
      "form": null,
      "segments": [
        {
          "letter": "G",
          "name": "grain",
          "values": [
            "1",
            "2"
          ]
        },
        {
          "letter": "T",
          "name": "tone",
          "values": [
            "1",
            "2"
          ]
        },
        {
          "letter": "L",
          "name": "lamination",
          "values": [
            "1",
            "2",
            "3"
          ]
        },
        {
          "letter": "N",
          "name": "nodules",
          "values": [
            "1",
            "2",
            "3"
          ]
        },
        {
          "letter": "F",
          "name": "fracture",
          "values": [
            "1",
            "2",
            "3"
          ]
        }
      ],
      "suffix": {
        "name": "fill",
        "values": [
          "u",
          "f"
        ],
        "after_segment": "F",
        "allowed_segment_values": [
          "2",
          "3"
        ],
        "optional": true
      }
    },
    "B": {
      "form": [
        "1"
      ],
      "segments": [
        {
          "letter": "G",
          "name": "grain",
          "values": [
            "1",
            "2"
          ]
        },
        {
          "letter": "T",
          "name": "tone",
          "values": [
            "1",
            "2"
          ]
        }
      ],
      "suffix": null
    },
    "C": {
      "form": [
        "1",
        "2",
        "3"
      ],
      "segments": [],
      "suffix": null
    },
    "D": {
      "form": [
        "1",
        "2",
        "3",
        "4"
      ],
      "segments": [],
      "suffix": null
    }
  }
} as const;
