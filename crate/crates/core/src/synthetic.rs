//! Seeded synthetic corpus: 10 upper classes, 30 lower classes, each lower
//! class generated from templates that carry class-distinctive calls.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Snippet, Taxonomy};

/// Labelled example snippets copied verbatim into the template set.
pub const FIXTURES: [(&str, &str); 6] = [
    (
        "Data_Transform.drop_column",
        "train_df.drop(\"Date\", inplace=True, axis=1)\ntest_df.drop(\"Date\", inplace=True, axis=1)",
    ),
    (
        "Model_Train.choose_model_class",
        "from sklearn import linear_model\n\nreg_CC = linear_model.Lasso(alpha=0.1)\nreg_Fat = linear_model.Lasso(alpha=0.1)",
    ),
    (
        "Hyperparam_Tuning.define_search_space",
        "parameters = {'lstm_nodes': [14,16,20],\n              'nb_epoch': [50],\n              'batch_size': [32],\n              'optimizer': ['adam']}",
    ),
    (
        "Visualization.distribution",
        "fig = plt.figure()\nfig.suptitle(\"Algorithm Comparison\")\nax = fig.add_subplot(111)\nplt.boxplot(results)\nax.set_xticklabels(names)\nplt.show()",
    ),
    (
        "Data_Transform.normalization",
        "scaler = MinMaxScaler()\ndf['revenue'] = scaler.fit_transform(\n    df[['revenue']]\n)",
    ),
    (
        "Model_Train.train_model",
        "rfr = RandomForestRegressor(\n    n_estimators=200, \n    max_depth=5, \n    max_features=0.5, \n    random_state=449,\n    n_jobs=-1\n)\nrfr.fit(x_train, y_train)",
    ),
];

/// `(qualified label, templates)`. Placeholders: `{v}` and `{w}` data
/// variables, `{m}` a model variable, `{c}` a column, `{n}` an integer,
/// `{f}` a float, `{file}` a file stem, `{pkg}` a package name.
const CLASSES: [(&str, &[&str]); 30] = [
    (
        "Hypothesis.statistical_test",
        &[
            "from scipy import stats\nstat, pval = stats.ttest_ind({v}['{c}'], {w}['{c}'])",
            "stat, pval = stats.shapiro({v}['{c}'])\nprint(pval)",
            "chi2, pval, dof, expected = stats.chi2_contingency(pd.crosstab({v}['{c}'], {v}['target']))",
        ],
    ),
    (
        "Environment.import_modules",
        &[
            "import numpy as np\nimport pandas as pd",
            "import os\nimport matplotlib.pyplot as plt\nimport seaborn as sns",
            "from sklearn.model_selection import train_test_split\nimport numpy as np",
        ],
    ),
    (
        "Environment.set_options",
        &[
            "pd.set_option('display.max_columns', {n})",
            "import warnings\nwarnings.filterwarnings('ignore')",
            "pd.set_option('display.max_rows', {n})\npd.options.display.float_format = '{:.2f}'.format",
        ],
    ),
    (
        "Environment.install_modules",
        &["!pip install {pkg}", "!pip install -q {pkg}\n!pip install --upgrade {pkg}"],
    ),
    (
        "Data_Extraction.load_from_csv",
        &[
            "{v} = pd.read_csv('../input/{file}.csv')",
            "{v} = pd.read_csv('{file}.csv', index_col=0)\n{w} = pd.read_csv('{file}_test.csv')",
        ],
    ),
    (
        "Data_Extraction.load_from_zip",
        &[
            "import zipfile\nwith zipfile.ZipFile('{file}.zip', 'r') as archive:\n    archive.extractall('data')",
            "zf = zipfile.ZipFile('../input/{file}.zip')\n{v} = pd.read_csv(zf.open('{file}.csv'))",
        ],
    ),
    (
        "Data_Extraction.load_from_sql",
        &[
            "conn = sqlite3.connect('{file}.db')\n{v} = pd.read_sql_query('SELECT * FROM {file}', conn)",
            "{v} = pd.read_sql('SELECT {c} FROM {file}', con=engine)",
        ],
    ),
    (
        "EDA.show_table",
        &["{v}.head({n})", "{v}.tail({n})", "display({v}.head())"],
    ),
    (
        "EDA.show_shape",
        &["print({v}.shape)", "print({v}.shape, {w}.shape)", "rows, cols = {v}.shape"],
    ),
    (
        "EDA.count_missing_values",
        &[
            "{v}.isnull().sum()",
            "{v}.isna().sum().sort_values(ascending=False)",
            "missing = {v}.isnull().sum() / len({v})",
        ],
    ),
    (
        "EDA.get_unique_values",
        &["{v}['{c}'].unique()", "{v}['{c}'].nunique()", "print({v}['{c}'].value_counts())"],
    ),
    (
        "Data_Transform.drop_column",
        &[
            FIXTURES[0].1,
            "{v} = {v}.drop(['{c}'], axis=1)",
            "{v}.drop(columns=['{c}'], inplace=True)",
        ],
    ),
    (
        "Data_Transform.normalization",
        &[
            FIXTURES[4].1,
            "scaler = StandardScaler()\n{v} = scaler.fit_transform({v})",
            "{v}['{c}'] = MinMaxScaler().fit_transform({v}[['{c}']])",
        ],
    ),
    (
        "Data_Transform.correct_missing_values",
        &[
            "{v}['{c}'] = {v}['{c}'].fillna({v}['{c}'].median())",
            "{v}['{c}'].fillna(0, inplace=True)",
            "{v} = {v}.fillna(method='ffill')",
        ],
    ),
    (
        "Data_Transform.remove_duplicates",
        &[
            "{v} = {v}.drop_duplicates()",
            "{v}.drop_duplicates(subset=['{c}'], keep='first', inplace=True)",
        ],
    ),
    (
        "Model_Train.choose_model_class",
        &[
            FIXTURES[1].1,
            "{m} = LogisticRegression(C={f}, max_iter={n})",
            "{m} = linear_model.Ridge(alpha={f})",
        ],
    ),
    (
        "Model_Train.train_model",
        &[FIXTURES[5].1, "{m}.fit(x_train, y_train)", "{m}.fit({v}, {w}, epochs={n})"],
    ),
    (
        "Model_Train.predict_on_test",
        &[
            "y_pred = {m}.predict(x_test)",
            "preds = {m}.predict_proba(x_test)[:, 1]",
            "{v} = {m}.predict({w})",
        ],
    ),
    (
        "Model_Train.save_model",
        &[
            "joblib.dump({m}, '{file}.pkl')",
            "with open('{file}.pkl', 'wb') as fh:\n    pickle.dump({m}, fh)",
            "{m}.save('{file}.h5')",
        ],
    ),
    (
        "Model_Evaluation.compute_test_metric",
        &[
            "print(accuracy_score(y_test, y_pred))",
            "score = f1_score(y_test, y_pred, average='weighted')",
            "rmse = np.sqrt(mean_squared_error(y_test, y_pred))",
        ],
    ),
    (
        "Model_Evaluation.cross_validation",
        &[
            "scores = cross_val_score({m}, {v}, {w}, cv={n})\nprint(scores.mean())",
            "kf = KFold(n_splits={n}, shuffle=True)\nscores = cross_val_score({m}, {v}, {w}, cv=kf)",
        ],
    ),
    (
        "Model_Evaluation.confusion_matrix",
        &[
            "cm = confusion_matrix(y_test, y_pred)\nprint(cm)",
            "print(confusion_matrix(y_test, {m}.predict(x_test)))",
        ],
    ),
    (
        "Model_Evaluation.classification_report",
        &[
            "print(classification_report(y_test, y_pred))",
            "report = classification_report(y_test, y_pred, output_dict=True)",
        ],
    ),
    (
        "Model_Interpretation.feature_importance",
        &[
            "importances = {m}.feature_importances_\nindices = np.argsort(importances)[::-1]",
            "explainer = shap.TreeExplainer({m})\nshap_values = explainer.shap_values({v})",
            "pd.Series({m}.feature_importances_, index={v}.columns).nlargest({n})",
        ],
    ),
    (
        "Hyperparam_Tuning.define_search_space",
        &[
            FIXTURES[2].1,
            "param_grid = {'n_estimators': [{n}, 200], 'max_depth': [3, 5, 7]}",
            "space = {'learning_rate': [0.01, {f}], 'num_leaves': [{n}, 63]}",
        ],
    ),
    (
        "Hyperparam_Tuning.find_best_params",
        &[
            "grid = GridSearchCV({m}, param_grid, cv={n})\ngrid.fit({v}, {w})",
            "search = RandomizedSearchCV({m}, param_grid, n_iter={n})\nsearch.fit({v}, {w})",
        ],
    ),
    (
        "Hyperparam_Tuning.find_best_score",
        &[
            "print(grid.best_params_)\nprint(grid.best_score_)",
            "best = search.best_estimator_\nprint(search.best_score_)",
        ],
    ),
    (
        "Visualization.distribution",
        &[
            FIXTURES[3].1,
            "sns.distplot({v}['{c}'], bins={n})",
            "plt.hist({v}['{c}'], bins={n})\nplt.show()",
        ],
    ),
    (
        "Visualization.scatter",
        &[
            "plt.scatter({v}['{c}'], {v}['target'])\nplt.xlabel('{c}')",
            "sns.scatterplot(x='{c}', y='target', data={v})",
        ],
    ),
    (
        "Visualization.heatmap",
        &[
            "sns.heatmap({v}.corr(), annot=True, cmap='coolwarm')",
            "corr = {v}.corr()\nsns.heatmap(corr, square=True)\nplt.show()",
        ],
    ),
];

const DATA_VARS: [&str; 10] = ["df", "data", "train", "test", "train_df", "test_df", "X", "frame", "dataset", "full"];
const MODEL_VARS: [&str; 6] = ["model", "clf", "rf", "reg", "estimator", "xgb_model"];
const COLUMNS: [&str; 8] = ["Age", "Fare", "Date", "price", "revenue", "SalePrice", "category", "length"];
const FILES: [&str; 6] = ["train", "test", "sales", "houses", "titanic", "reviews"];
const PACKAGES: [&str; 5] = ["lightgbm", "catboost", "xgboost", "shap", "optuna"];
/// Class-neutral lines occasionally prepended as noise.
const NOISE: [&str; 3] = ["{w} = {v}.copy()", "print('done')", "SEED = {n}"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n_labeled: usize,
    pub n_unlabeled: usize,
    /// Probability of prepending a class-neutral line.
    pub noise: f64,
    pub n_competitions: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_labeled: 500,
            n_unlabeled: 500,
            noise: 0.3,
            n_competitions: 12,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub labeled: Vec<Snippet>,
    pub unlabeled: Vec<Snippet>,
    pub taxonomy: Taxonomy,
}

/// The synthetic taxonomy: 10 upper classes with 30 lower classes.
pub fn taxonomy() -> Taxonomy {
    let mut t = Taxonomy::default();
    for (label, _) in CLASSES {
        let (u, l) = label.split_once('.').expect("qualified");
        t.insert(u, l);
    }
    t
}

pub fn class_labels() -> Vec<&'static str> {
    CLASSES.iter().map(|(l, _)| *l).collect()
}

fn fill(template: &str, rng: &mut ChaCha8Rng) -> String {
    let v = *DATA_VARS.choose(rng).expect("non-empty");
    let w = loop {
        let w = *DATA_VARS.choose(rng).expect("non-empty");
        if w != v {
            break w;
        }
    };
    let values = [
        ("{v}", v.to_string()),
        ("{w}", w.to_string()),
        ("{m}", MODEL_VARS.choose(rng).expect("non-empty").to_string()),
        ("{c}", COLUMNS.choose(rng).expect("non-empty").to_string()),
        ("{n}", rng.gen_range(2..=50).to_string()),
        ("{f}", format!("{:.2}", rng.gen_range(0.01..10.0))),
        ("{file}", FILES.choose(rng).expect("non-empty").to_string()),
        ("{pkg}", PACKAGES.choose(rng).expect("non-empty").to_string()),
    ];
    let mut out = template.to_string();
    for (key, value) in &values {
        out = out.replace(key, value);
    }
    out
}

fn draw(class: usize, cfg: &SyntheticConfig, rng: &mut ChaCha8Rng) -> String {
    let templates = CLASSES[class].1;
    let body = fill(templates[rng.gen_range(0..templates.len())], rng);
    if rng.gen_bool(cfg.noise.clamp(0.0, 1.0)) {
        let noise = fill(NOISE[rng.gen_range(0..NOISE.len())], rng);
        format!("{noise}\n{body}")
    } else {
        body
    }
}

/// Labelled snippets cycle through the classes so each gets
/// `n_labeled / 30` or one more members; unlabelled snippets draw their
/// class uniformly.
pub fn generate(cfg: &SyntheticConfig) -> SyntheticCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n_comp = cfg.n_competitions.max(1);
    let mut labeled = Vec::with_capacity(cfg.n_labeled);
    for i in 0..cfg.n_labeled {
        let class = i % CLASSES.len();
        let mut s = Snippet::labeled(format!("s{i:05}"), draw(class, cfg, &mut rng), CLASSES[class].0);
        s.competition_id = Some(format!("comp{:02}", rng.gen_range(0..n_comp)));
        labeled.push(s);
    }
    let mut unlabeled = Vec::with_capacity(cfg.n_unlabeled);
    for i in 0..cfg.n_unlabeled {
        let class = rng.gen_range(0..CLASSES.len());
        let mut s = Snippet::new(format!("u{i:05}"), draw(class, cfg, &mut rng));
        s.competition_id = Some(format!("comp{:02}", rng.gen_range(0..n_comp)));
        unlabeled.push(s);
    }
    SyntheticCorpus {
        labeled,
        unlabeled,
        taxonomy: taxonomy(),
    }
}
