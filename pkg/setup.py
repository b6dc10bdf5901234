from setuptools import setup, find_packages
from os import path

here = path.abspath(path.dirname(__file__))
with open(path.join(here, 'README.md'), encoding='utf-8') as f:
    long_description = f.read()

setup(
    name='webdvfs',
    version='0.3.0',
    description='Predict energy-efficient big.LITTLE processor configurations for web page rendering',
    long_description=long_description,
    long_description_content_type='text/markdown',
    install_requires=[
            'click',
            'numpy>=1.17',
            'pytest',
            'scipy>=1.6',
            'colorlog',
            'tinycss2>=1.2'
    ],
    packages=find_packages(),
    include_package_data=True,
    package_data={'webdvfs': ['test/test_files/*', 'test/test_files/*/*']},
    python_requires='>=3.8',
    entry_points={
        'console_scripts': [
            'webdvfs=webdvfs.main:main'
        ]
    },
    classifiers=[
        "Programming Language :: Python :: 3",
        "License :: OSI Approved :: MIT License",
        "Operating System :: OS Independent",
    ],
)
