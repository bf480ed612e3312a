#pragma once

// Judge and annotator prompt templates. The text of each constant must stay
// byte-identical to the matching file under docs/prompts/ (golden-file test).

#include <string_view>

namespace sieves::prompts {

// Distractor generation chat, kept for reference; not sent by any command.
inline constexpr std::string_view kThymeDistractor = R"prompt(System message:
You are an expert at creating plausible but incorrect distractor options for visual question answering tasks. Given a question, image, ground truth answer, and optionally a wrong answer from a model, generate additional plausible distractor options that are wrong but could seem reasonable.

User message (same-category example):
Category: {category} Question: {question} Ground truth answer: {ground_truth}

Here is the cropped region of interest: [cropped ground-truth box image]

Generate 2-3 plausible but incorrect distractor options.

Assistant message (example distractors):
[example distractor 1]
[example distractor 2]
[example distractor 3]

User message (current Thyme example):
Category: {category} Question: {question} Ground truth answer: {ground_truth}
Wrong answer from a model: {wrong_answer} [included only when available]

Here is / Here are the cropped region(s) of interest from the image: [one or more cropped ground-truth box images]

Generate exactly {num_distractors_needed} plausible but incorrect distractor options. Make them specific and realistic based on the image. Return only the distractors, one per line, without numbering.
)prompt";

// Instruction block appended to the reasoner prompt to force a zoom-in.
inline constexpr std::string_view kReasonerLocalization = R"prompt(Guidelines: Understand the given visual information and the user query. Employ the given visual operations (tools) to observe better the visual elements necessary to answer the question. For an image, we can look closer by `crop_image_normalized`. Please always crop into the relevant region before answering the question. You must use the cropping tool first and finish your turn. After the user returns the zoomed-in image, you can reason about what you observe and give your final answer. You must always use the cropping tool in the first turn, end your turn, wait for the cropped image. If you see the relevant object or objects needed to answer the question clearly, you can give the final answer. Otherwise, try to use the `crop_image_normalized` tool again, until you find the relevant object of objects. You have up to 10 turns. Reason with the visual information step by step, and put your final answer within \boxed{}. It is very important to follow these instructions.
)prompt";

// Open-ended correctness judge. Placeholders: {question} {pred_answer} {gt_answer}.
inline constexpr std::string_view kCorrectnessJudge = R"prompt(Compare the predicted answer to the ground truth answer and determine if they convey the same meaning, and if the model was likely referring to the same object or situation when answering visual questions.

You can think step-by-step about whether the predicted answer conveys the same meaning as the ground truth answer, but after that, output only ANSWER: and yes or no after that.
Sometimes, the predicted answer will also contain the model's thinking process and justificatioon. You can take it into account, but focus on the validity of the final answer, which will generally appear at the end.
If the ground truth answer is only 't', this means the question is not answerable. In that case, you should always mark the question as wrong, because no answer can be correct, not even saying that there is no answer.

For example:

Question: What is the person holding?
Predicted answer: Blue pullover
Ground truth answer: Sweater

A pullover is a type of sweater. The colour is not mentioned in the ground truth answer, so we can assume it is correct. ANSWER: yes

## Another example ##
Question: Which object was put down by the person?
Predicted answer: jacket
Ground truth answer: The shoe.
A jacket is a type of clothing, similar to a shoe, which is also a type of clothing/accessory.
However, a jacket does not look similar to a shoe, so it is unlikely that the model confused them, and instead simply answered incorrectly. ANSWER: no
- The other options (food, blanket, sandwich) are not related to clothing or accessories.

## Another example ##
Question: What verification is this paper for?
Predicted answer: freeboard verification
Ground truth answer: Freeboard

Clearly the model shows in its response it refers to the verification being a freeboard verification, which conveys the same meaning. ANSWER: yes

## Real user request ##
Question: {question}
Predicted answer: {pred_answer}
Ground truth answer: {gt_answer}
)prompt";

// Crop/answer coherence judge. Placeholders: {question} {last_message_with_boxed_answer}.
inline constexpr std::string_view kGroundingCoherence = R"prompt(You are an expert evaluator assessing whether a model's response to a visual question is grounded in the provided image crop.

Given:
- Question: {question}
- Model's Response (with final answer in \boxed{}): {last_message_with_boxed_answer}
- Image: [Provided image crop]

Please evaluate two aspects:

1. **Crop Sufficiency**: Is the provided image crop sufficient to support the model's response? Does it contain all the necessary visual information referenced in the response? If the model explicitly states they use the global view to answer this question, you should consider this as not grounded in the prompt. Note you are not provided this final image, and only the crop, which the model should only use to give the final answer.

2. **Answer Coherence**: Is the model's response coherent with what is actually visible in the image? Or is the model hallucinating information or obtaining it from elsewhere (not from the image)?

Think step by step about both aspects, then provide your final assessment.

Output your final decision as \boxed{Yes} if the answer is well-grounded in the image crop (both crop is sufficient AND answer is coherent), or \boxed{No} if there are issues with either aspect.

Examples:
- If the crop shows a clear view of a red car and the model answers "red car" -> \boxed{Yes}
- If the crop shows a partial view that doesn't contain enough information to answer -> \boxed{No}
- If the crop shows a dog but the model answers "cat" -> \boxed{No}
- If the crop shows a room but the model mentions specific details not visible in the crop -> \boxed{No}

Your response:
)prompt";

// Annotator stage 1: target phrase extraction. Placeholder: {question}.
inline constexpr std::string_view kLocalizationExtract = R"prompt(System:
You extract the target object from a visual question. Return only a short noun phrase describing the object to locate in the image. If the question uses relational or positional language, keep that context (e.g., 'object on the woman's left ring finger').
User:
{question}
)prompt";

// Annotator stage 2: grounding in 0-1000 [top, left, bottom, right]. Placeholder: {target_object}.
inline constexpr std::string_view kLocalizationGround = R"prompt(System:
You are a precise visual grounding assistant. Return only JSON.
User:
Please return the bounding box coordinates of "{target_object}". Use normalized 0-1000 coordinates in [top, left, bottom, right] order. Return a JSON list like: [{"box_2d": [top, left, bottom, right], "label": "..."}].
Image: [Provided full image]
)prompt";

}  // namespace sieves::prompts
