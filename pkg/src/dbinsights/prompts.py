"""Prompt templates and the substitution helper.

Each template is registered under a tag. Tags form the closed id set used
for chat-request validation, mock fixtures, and usage accounting.
"""

from __future__ import annotations

import re

from .errors import ParseFailure

DESCRIBE_DATABASE = """\
Given the following database create a description of the database in natural text explaining to a user the structure of the table and the data it contains. Avoid html and give raw text with all the explanations. Explain the database, the tables and the columns in each table.

{db_schema}

{db_sample_rows}"""

SHORTEN_DESCRIPTION = """\
Take the following database description and return a brief (3 lines) description.

Your description must contain only a high-level description of the database, avoid explaining tables.

###

Database description: {tables_description}"""

HIGH_LEVEL_QUESTIONS = """\
Generate ten questions related to a user that works as an analyst from the following data sources: given a retail worker who has to analyze customer data - what are the customer trends, and what actions might they need to take using data sources. The user works with the following database: {tables_description}"""

LOW_LEVEL_QUESTIONS = """\
We have a platform for users that need to analyse data.
We have access to these sql tables {tables}. The tables have the following description {tables_description}. We have the following complex questions {questions}.
Generate subquestions that a user can use to answer the complex question which might be answered from these tables. The questions should be answered in the form of insights that can be used to make decisions not just information about some numbers.The questions should be very verbose that if sum is needed say sum and if average is needed say average of certain columns. The questions should non sequential and can be  executed in parallel. You can use the following schema as a reference: {schema}"""

DIRECT_LOW_LEVEL_QUESTIONS = """\
We have a platform for users that need to analyse data.
We have access to these sql tables {tables}.
The tables have the following description {tables_description}.
Generate ten questions related to customer consumption data in the industry for the user from the following data sources: The questions should be answered in the form of insights that can be used to make decisions not just information about some numbers.
The questions should be very verbose that if sum is needed say sum and if average is needed say average of certain columns. The questions should be non sequential and can be executed in parallel. You can use the following schema as a reference: {schema}"""

SERIAL_INSIGHTS = """\
We have a platform for users that need to analyse data.
We have access to these sql tables {tables}.
The tables have the following description {tables_description}.
Generate ten insights (3 lines long) related to customer consumption data in the industry for the user from the following data sources: The insights must be used to make decisions not just information about some numbers.

You can use the following schema as a reference: {schema}

Data: {Data}"""

SQL_AGENT_SYSTEM = """\
You are an agent designed to interact with a SQL database.

Given an input question, create a syntactically correct {dialect} query to run, then look at the results of the query and return the answer

Unless the user specifies a specific number of examples they wish to obtain, always limit your query to at most {top_k} results.

You can order the results by a relevant column to return the most interesting examples in the database.

Never query for all the columns from a specific table, only ask for the relevant columns given the question.

You have access to tools for interacting with the database.

Only use the below tools. Only use the information returned by the below tools to construct your final answer.

You MUST double check your query before executing it. If you get an error while executing a query, rewrite the query and try again.


DO NOT make any DML statements (INSERT, UPDATE, DELETE, DROP etc.) to the database.


If the question does not seem related to the database, just return "I don't know" as the answer."""

VERBALIZE_RESULT = """\
Answer the question below in natural language using only the query result. Reply with one or two complete sentences. If the result is empty, say that no rows matched.

Question: {question}

Query result:
{result_table}"""

VALIDATE_ANSWER = """\
You are grading the answer to a data question. Rate it on two axes, each a decimal between 0 and 1:
- RELEVANCE: how directly the answer addresses the question.
- ANSWERABILITY: how completely the question could be answered from the underlying data.

Question: {question}

Answer: {answer}

Respond with exactly two lines:
RELEVANCE: <score>
ANSWERABILITY: <score>"""

SUMMARIZE_ANSWERS = """\
As an AI programmed to simulate an expert-level business analyst, your task is to construct a short strategic business insight from provided data.

Could you please provide a concise and comprehensive summary of the given text? The summary should capture the main
points and key details of the text while conveying the author's intended meaning accurately. The length of the summary
should be around 3 lines, gathering the main points and representing it in 3 lines.

The final insight should seem realistic and actionable, serving as a powerful tool for decision-makers to visualize potential strategies and outcomes.

Your summary must follow this guidelines
- Don't write insights longer than 3 lines long.
- Avoid adding information or recommendations that don't come from the context.
- Avoid enumeration of facts; reason the high-level pattern from the data and most important information.
- Mention the important data to support the inferred high-level patterns.
- Avoid focusing on individual entities, unless it's for exemplifying a pattern.
- Provide information that is actionable, not just random facts; it must only provide the interesting information.
- Avoid mentioning unimportant information.
- You don't need to mention all the information from the data, only the important one.
Remember to follow this instructions (after doing the summary, recheck that your summary followings them) or I will lose my job :(

High-Level Question
{hlquestion}

Context
{low_level_answers}"""

REFLECT_SUMMARY = """\
Please reflect on your recent summarization task. You will be provided with the context and corresponding summary, alongside with the score that the summary received and its reasoning. You will need to produce a new summarized strategic business insight from provided data, considering the score and the reasoning to improve the result.
Remember that the final insight should seem realistic and actionable, serving as a powerful tool for decision-makers to visualize
potential strategies and outcomes.

Avoid adding extra information or recommendations.
Focus on the data coming from the context, but don't just enumerate it, reason and provide an actionable insight for the user with the given task using the information from the context.

###

Context:
{low_level_answers}

###

Summary:
{summary}

###

Score:
This summary was evaluated with a score of: {score}

Reasoning:
The reasons for the score:
{reasoning}

###

Guidelines for a Good Summary:
- Identify Key Points: Focus on the main ideas and essential details of the original text.
- Be Concise: Use clear and concise language to convey the information.
- Avoid Personal Opinions: Ensure the summary is objective and free from personal bias.
- Use Your Own Words: Paraphrase the original text to avoid plagiarism.
- Maintain Coherence: Ensure the summary is well-organized and flows logically.

OUTPUT:
Produce an enhanced version of the summary. Consider the score and reason to make it, it is important that this version is different from the previous one.
Extremely important:
- Return a plain text as output, no html
- Don't change any number, as I need them as they are in the original context.
Please don't modify the placeholders."""

SPLIT_CLAIMS = """\
Split the following text into its individual factual claims. Each claim must be a standalone declarative sentence that can be checked against data on its own. Output one claim per line with no numbering and no extra commentary.

Text:
{text}"""

JUDGE_CLAIMS = """\
You are checking a set of claims against the answers they were summarized from. For each claim, decide:
- SUPPORTED: the answers state or directly imply the claim.
- CONTRADICTED: the answers state the opposite or incompatible figures.
- NEUTRAL: the answers neither confirm nor contradict the claim.

Answers:
{answers}

Claims:
{claims}

Respond with one line per claim, in order:
CLAIM <number>: <SUPPORTED|CONTRADICTED|NEUTRAL> - <one short reason>"""

COMPARE_INSIGHTS = """\
Compare and return what insight according to the following criteria:
Insights must provide information that is:
- Insightful. The information must be interesting and relevant.
- Actionable and impactful. The information must lead to tangible follow up actions and measurable outcomes
- Data driven. The information must be concrete and derived from real data.
#####
For the output, only return the best insight (either 'Insight 1' or 'Insight 2'). No yapping
#####
All insights are related to the database:
{tables_description}
#####
Insight 1: {insight1}
#####
Insight 2: {insight2}"""

COMPARE_INSIGHTS_TIEBREAK = (
    "The two insights below are closely matched. Weigh the criteria once more and pick a single winner.\n"
    + COMPARE_INSIGHTS
)

TEMPLATES: dict[str, str] = {
    "db_description": DESCRIBE_DATABASE,
    "short_description": SHORTEN_DESCRIPTION,
    "hl_generator": HIGH_LEVEL_QUESTIONS,
    "ll_generator": LOW_LEVEL_QUESTIONS,
    "direct_ll_generator": DIRECT_LOW_LEVEL_QUESTIONS,
    "serial_generator": SERIAL_INSIGHTS,
    "sql_agent": SQL_AGENT_SYSTEM,
    "verbalizer": VERBALIZE_RESULT,
    "answer_validator": VALIDATE_ANSWER,
    "summarizer": SUMMARIZE_ANSWERS,
    "reflection": REFLECT_SUMMARY,
    "claim_splitter": SPLIT_CLAIMS,
    "consistency_judge": JUDGE_CLAIMS,
    "insight_judge": COMPARE_INSIGHTS,
    "insight_judge_tiebreak": COMPARE_INSIGHTS_TIEBREAK,
}

KNOWN_TAGS = frozenset(TEMPLATES)

# Exploratory question/insight generation runs warm; everything that must be
# reproducible (SQL, judging, scoring, summaries) runs at temperature 0.
DEFAULT_TEMPERATURES: dict[str, float] = {tag: 0.0 for tag in TEMPLATES}
for _tag in ("hl_generator", "ll_generator", "direct_ll_generator", "serial_generator"):
    DEFAULT_TEMPERATURES[_tag] = 0.7

_PLACEHOLDER = re.compile(r"\{[A-Za-z_][A-Za-z0-9_]*\}")


def fill(template: str, **values: object) -> str:
    """Substitute every placeholder in one pass; refuse to emit a partially filled prompt.

    Values are inserted verbatim and never re-scanned, so braces inside
    substituted data cannot corrupt the prompt.
    """
    used: set[str] = set()

    def _sub(match: re.Match[str]) -> str:
        name = match.group(0)[1:-1]
        if name not in values:
            raise ParseFailure(f"unsubstituted placeholder {{{name}}} in prompt")
        used.add(name)
        return str(values[name])

    out = _PLACEHOLDER.sub(_sub, template)
    unused = set(values) - used
    if unused:
        raise KeyError(f"template has no placeholder for: {sorted(unused)}")
    return out


def temperature_for(tag: str) -> float:
    return DEFAULT_TEMPERATURES.get(tag, 0.0)
